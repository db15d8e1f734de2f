#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace supcl {

// Coarse categories reported by the CLI on stderr.
enum class ErrorCategory { config, data, numeric, io };

enum class ErrorKind {
  shape,                // dimension / rank mismatch
  invalid_probability,  // dropout p outside [0,1)
  degenerate_embedding, // row norm below the normalization floor
  label,                // class id out of range
  numeric,              // non-finite value
  config,               // invalid configuration
  length,               // sequence longer than max_seq_len
  unsupported_view_count,
  empty_positive_set,
  sampler,
  class_count_mismatch,
  parse,
  range,
  degenerate_input,
  length_mismatch,
  empty_input,
  io,
};

std::string_view to_string(ErrorKind kind);
std::string_view to_string(ErrorCategory category);
ErrorCategory category_of(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace supcl
