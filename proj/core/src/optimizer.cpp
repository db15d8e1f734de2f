#include "supcl/optimizer.hpp"

#include <cmath>

#include "supcl/error.hpp"

namespace supcl {

AdamW::AdamW(std::vector<Parameter> params, double learning_rate, AdamWConfig config)
    : learning_rate_(learning_rate), config_(config) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorKind::config, "learning rate must be positive and finite");
  }
  for (Parameter& p : params) {
    if (!p.tensor.is_leaf() || !p.tensor.requires_grad()) {
      fail(ErrorKind::shape, "optimizer parameters must be leaves that require grad");
    }
    const std::size_t n = p.tensor.size();
    slots_.push_back({std::move(p), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
}

void AdamW::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  for (Slot& slot : slots_) {
    Tensor& param = slot.param.tensor;
    if (!param.has_grad()) continue;
    auto grad = param.grad();
    auto w = param.mutable_data();
    const double decay = slot.param.decay ? config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g)) fail(ErrorKind::numeric, "non-finite gradient in optimizer step");
      slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g;
      slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = slot.m[i] / bias1;
      const double v_hat = slot.v[i] / bias2;
      w[i] -= learning_rate_ * decay * w[i];
      w[i] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (Slot& slot : slots_) slot.param.tensor.zero_grad();
}

}  // namespace supcl
