#pragma once

#include <functional>
#include <string>
#include <vector>

#include "supcl/tensor.hpp"

namespace supcl {

// Gradients whose norm is below this (e.g. key biases, which softmax ignores)
// are compared in absolute terms.
inline constexpr double kGradNormFloor = 1e-4;

struct GradCheckResult {
  std::string name;
  // max over inputs of ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;
};

// Compares backward() against central finite differences. `loss` must
// rebuild the graph from the current leaf values on every call; each leaf
// in `inputs` is perturbed in place and restored afterwards.
GradCheckResult check_gradients(std::string name, const std::function<Tensor()>& loss,
                                std::vector<Tensor> inputs, double step = 1e-5);

}  // namespace supcl
