#include "supcl/error.hpp"

namespace supcl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::invalid_probability: return "invalid_probability";
    case ErrorKind::degenerate_embedding: return "degenerate_embedding";
    case ErrorKind::label: return "label";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::config: return "config";
    case ErrorKind::length: return "length";
    case ErrorKind::unsupported_view_count: return "unsupported_view_count";
    case ErrorKind::empty_positive_set: return "empty_positive_set";
    case ErrorKind::sampler: return "sampler";
    case ErrorKind::class_count_mismatch: return "class_count_mismatch";
    case ErrorKind::parse: return "parse";
    case ErrorKind::range: return "range";
    case ErrorKind::degenerate_input: return "degenerate_input";
    case ErrorKind::length_mismatch: return "length_mismatch";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return "CONFIG";
    case ErrorCategory::data: return "DATA";
    case ErrorCategory::numeric: return "NUMERIC";
    case ErrorCategory::io: return "IO";
  }
  return "UNKNOWN";
}

ErrorCategory category_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::invalid_probability:
    case ErrorKind::unsupported_view_count:
      return ErrorCategory::config;
    case ErrorKind::label:
    case ErrorKind::length:
    case ErrorKind::empty_positive_set:
    case ErrorKind::sampler:
    case ErrorKind::class_count_mismatch:
    case ErrorKind::parse:
    case ErrorKind::range:
    case ErrorKind::length_mismatch:
    case ErrorKind::empty_input:
      return ErrorCategory::data;
    case ErrorKind::shape:
    case ErrorKind::degenerate_embedding:
    case ErrorKind::numeric:
    case ErrorKind::degenerate_input:
      return ErrorCategory::numeric;
    case ErrorKind::io:
      return ErrorCategory::io;
  }
  return ErrorCategory::numeric;
}

}  // namespace supcl
