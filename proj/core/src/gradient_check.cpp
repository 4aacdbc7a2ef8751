#include "seedcl/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace seedcl {

GradientCheckReport gradient_check(const LossFunction& loss, ParamStore<double> params, Rng& rng,
                                   const GradientCheckOptions& options) {
  GradientCheckReport report;
  ParamStore<double> analytic = params.zeros_like();
  loss(params, &analytic);

  // (entry, offset) of every trainable scalar; frozen ones must carry zero.
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entry(i);
    if (!e.trainable) {
      ++report.frozen_entries;
      for (double g : analytic.entry(i).values) report.frozen_nonzero += g != 0.0 ? 1 : 0;
      continue;
    }
    for (std::size_t k = 0; k < e.size(); ++k) pool.emplace_back(i, k);
  }

  const std::size_t n = std::min(options.samples, pool.size());
  for (std::size_t s = 0; s < n; ++s) std::swap(pool[s], pool[s + rng.below(pool.size() - s)]);

  for (std::size_t s = 0; s < n; ++s) {
    const auto [i, k] = pool[s];
    auto values = params.data(i);
    const double original = values[k];
    values[k] = original + options.step;
    const double up = loss(params, nullptr);
    values[k] = original - options.step;
    const double down = loss(params, nullptr);
    values[k] = original;

    const double numeric = (up - down) / (2.0 * options.step);
    const double exact = analytic.entry(i).values[k];
    const double abs_err = std::fabs(numeric - exact);
    const double rel = abs_err / std::max({std::fabs(numeric), std::fabs(exact), options.abs_floor});
    ++report.checked;
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel > report.max_relative_error || report.worst_parameter.empty()) {
      report.max_relative_error = std::max(report.max_relative_error, rel);
      report.worst_parameter = params.entry(i).name;
      report.worst_offset = k;
    }
  }
  return report;
}

}  // namespace seedcl
