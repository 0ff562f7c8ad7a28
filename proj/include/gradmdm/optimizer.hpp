#pragma once

#include <cstddef>
#include <vector>

#include "gradmdm/tensor.hpp"

namespace gradmdm {

struct AdamConfig {
  double step_size = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment descent on a single tensor. Moments are lazily sized on
// the first step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(Tensor& param, const Tensor& grad);
  void reset();
  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace gradmdm
