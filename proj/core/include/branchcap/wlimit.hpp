// Sampling and moment analysis of the martingale limit W(z0) of the
// comparison Galton-Watson process: W approximated by Ztilde_n / a^n at a
// truncation generation, with analytic moments and the classical
// extinction-probability oracle.

#pragma once

#include <cstdint>
#include <vector>

#include "branchcap/laws.hpp"

namespace branchcap {

inline constexpr std::uint64_t kDefaultWTruncation = 30;

struct WEnsemble {
  std::vector<double> values;   // Ztilde_{n_trunc} / a^{n_trunc} per replicate
  std::uint64_t truncation = kDefaultWTruncation;
  std::uint64_t z0 = 1;

  double sample_mean() const;
  double sample_variance() const;
  double mass_at_zero() const;
};

// R independent W approximants; extinct paths contribute 0.  The comparison
// process reproduces with the limit law (x = 0, K = infinity) throughout.
WEnsemble sample_w(const OffspringLaw& law, std::uint64_t z0, std::uint64_t n_trunc,
                   std::uint64_t seed, std::uint64_t replicates, unsigned threads = 1);

struct WMoments {
  double mean = 0.0;      // z0
  double variance = 0.0;  // z0 sigma^2(0) / (a^2 - a)
};

WMoments w_moments(const OffspringLaw& law, std::uint64_t z0);

// Smallest fixed point of the limit-law generating function, by functional
// iteration to 1e-12.
double extinction_probability(const OffspringLaw& law);

}  // namespace branchcap
