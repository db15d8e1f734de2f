#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "supcl/gradcheck.hpp"

namespace supcl::cli {

enum class GradScope { losses, encoder, all };

GradScope grad_scope_from_string(std::string_view name);

inline constexpr double kLossTolerance = 1e-5;
inline constexpr double kEncoderTolerance = 1e-4;

struct SuiteEntry {
  GradCheckResult result;
  double tolerance = 0.0;

  bool ok() const { return result.max_relative_error <= tolerance; }
};

// "losses": both contrastive losses and the ops they are built from, on
// random batches, checked w.r.t. every embedding entry.
// "encoder": encoder ops, then a 2-layer d_model=8 encoder feeding the
// supervised loss (M=3, N=2, p=0), checked w.r.t. every weight tensor.
std::vector<SuiteEntry> run_gradcheck_suite(GradScope scope, std::uint64_t seed = 0);

}  // namespace supcl::cli
