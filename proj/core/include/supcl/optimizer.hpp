#pragma once

#include <cstddef>
#include <vector>

#include "supcl/tensor.hpp"

namespace supcl {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

struct Parameter {
  Tensor tensor;
  bool decay = true;
};

// Adam with decoupled weight decay. Parameters that received no gradient
// since the last zero_grad() are left untouched by step().
class AdamW {
 public:
  AdamW(std::vector<Parameter> params, double learning_rate, AdamWConfig config = {});

  void step();
  void zero_grad();
  std::size_t steps() const { return steps_; }

 private:
  struct Slot {
    Parameter param;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
  double learning_rate_;
  AdamWConfig config_;
  std::size_t steps_ = 0;
};

}  // namespace supcl
