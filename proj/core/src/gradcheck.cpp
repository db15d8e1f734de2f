#include "supcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "supcl/error.hpp"

namespace supcl {

GradCheckResult check_gradients(std::string name, const std::function<Tensor()>& loss,
                                std::vector<Tensor> inputs, double step) {
  GradCheckResult result;
  result.name = std::move(name);

  for (Tensor& input : inputs) {
    if (!input.is_leaf() || !input.requires_grad()) {
      fail(ErrorKind::shape, "check_gradients: inputs must be leaves that require grad");
    }
    input.zero_grad();
  }
  loss().backward();

  for (Tensor& input : inputs) {
    std::vector<double> analytic(input.size(), 0.0);
    if (input.has_grad()) {
      auto g = input.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    std::vector<double> numeric(input.size());
    auto values = input.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double up = loss().item();
      values[i] = original - step;
      const double down = loss().item();
      values[i] = original;
      numeric[i] = (up - down) / (2.0 * step);
    }

    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double diff = analytic[i] - numeric[i];
      diff_sq += diff * diff;
      a_sq += analytic[i] * analytic[i];
      n_sq += numeric[i] * numeric[i];
      result.max_abs_error = std::max(result.max_abs_error, std::abs(diff));
    }
    const double denom = std::max(std::sqrt(std::max(a_sq, n_sq)), kGradNormFloor);
    const double rel = (diff_sq == 0.0) ? 0.0 : std::sqrt(diff_sq) / denom;
    result.max_relative_error = std::max(result.max_relative_error, rel);
    result.entries += input.size();
    input.zero_grad();
  }
  return result;
}

}  // namespace supcl
