#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "seedcl/params.hpp"
#include "seedcl/rng.hpp"

namespace seedcl {

/// Evaluates the loss at params; when grads is non-null it also accumulates
/// the analytic gradient into it (grads arrives zeroed, shaped like params).
using LossFunction = std::function<double(const ParamStore<double>& params, ParamStore<double>* grads)>;

struct GradientCheckOptions {
  std::size_t samples = 200;
  double step = 1e-5;
  // Denominator floor for the relative error, so entries whose gradient is
  // at round-off level are compared absolutely.
  double abs_floor = 1e-6;
};

struct GradientCheckReport {
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_offset = 0;
  std::size_t frozen_entries = 0;
  std::size_t frozen_nonzero = 0;  // frozen scalars with a non-zero analytic gradient
};

/// Central finite differences on a random sample of trainable scalars,
/// drawn without replacement, compared against the analytic gradient.
GradientCheckReport gradient_check(const LossFunction& loss, ParamStore<double> params, Rng& rng,
                                   const GradientCheckOptions& options = {});

}  // namespace seedcl
