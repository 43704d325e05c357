#pragma once

#include <span>

#include "sofuse/autograd.hpp"

namespace sofuse {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments live in the Parameter so they travel
// with checkpoints. Masked positions are never updated and stay at zero.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  void step(std::span<Parameter* const> params) const;
  void step(Parameter& p) const;

 private:
  AdamConfig config_;
};

}  // namespace sofuse
