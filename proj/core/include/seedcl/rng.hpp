#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace seedcl {

/// Deterministic random stream. The engine is mt19937_64, whose output
/// sequence is fixed by the standard; all conversions to reals and ranges are
/// done here rather than through <random> distributions, whose algorithms are
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for a position in a hierarchy, e.g.
  /// derive(master_seed, {class_index, image_index}). The result only depends
  /// on the arguments, never on how many draws other streams have made.
  static Rng derive(std::uint64_t master, std::initializer_list<std::uint64_t> path);

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

  /// Child seed for handing to another component.
  std::uint64_t split() { return next(); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace seedcl
