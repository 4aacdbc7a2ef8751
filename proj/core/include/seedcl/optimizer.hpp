#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seedcl/params.hpp"

namespace seedcl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 penalty added to the gradient
};

/// Adam with coupled L2 weight decay. Frozen entries are never touched.
template <typename Real>
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }
  double learning_rate() const noexcept { return config_.learning_rate; }
  std::int64_t steps() const noexcept { return steps_; }

  /// grads must carry every trainable entry of params by name.
  void step(ParamStore<Real>& params, const ParamStore<Real>& grads);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments, std::less<>> state_;
};

}  // namespace seedcl
