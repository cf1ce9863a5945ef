// Generation-index conventions.  All logarithms are taken in base a, the
// mean offspring number at zero density; real-valued indices are mapped to
// generations by a tolerant floor so that exact powers (K = a^n) do not fall
// victim to floating-point wobble.

#pragma once

#include <cmath>
#include <cstdint>

namespace branchcap {

inline constexpr double kFloorSlack = 1e-9;

inline std::int64_t tolerant_floor(double v) noexcept {
  return static_cast<std::int64_t>(std::floor(v + kFloorSlack));
}

inline double log_base(double value, double base) noexcept {
  return std::log(value) / std::log(base);
}

// n_K = floor(c * log_a K): the horizon of the branching-like early stage.
inline std::int64_t early_horizon(double c, double capacity, double a) noexcept {
  return tolerant_floor(c * log_base(capacity, a));
}

// floor(log_a K): the generation at which densities become detectable.
inline std::int64_t detection_time(double capacity, double a) noexcept {
  return tolerant_floor(log_base(capacity, a));
}

// nu_K = floor(log_a K) - n_K: the length of the deterministic late stage.
inline std::int64_t late_stage_length(double c, double capacity, double a) noexcept {
  return detection_time(capacity, a) - early_horizon(c, capacity, a);
}

// Fractional part of log_a K.  The ensemble observed at generation
// floor(log_a K) sits a^{-frac} "early" of the ideal limit; reference
// ensembles are scaled accordingly (see experiments.hpp).
inline double detection_frac(double capacity, double a) noexcept {
  return log_base(capacity, a) - static_cast<double>(detection_time(capacity, a));
}

}  // namespace branchcap
