// Trajectory generation for capacity-regulated branching populations:
// exact per-individual sampling, distributionally identical O(1)-per-
// generation aggregate sampling, and the three-process coupling built from
// shared uniforms.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "branchcap/indexing.hpp"
#include "branchcap/laws.hpp"

namespace branchcap {

enum class SimMode { Exact, Fast };

// Counts above this bound abort the run; populations at desk scale stay far
// below it.
inline constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 62;

struct SimConfig {
  double capacity = 1e6;              // K
  std::uint64_t initial_count = 1;    // z0
  double c_exponent = 0.6;            // c, in (1/2, 1)
  double gamma_exponent = 0.8;        // gamma, in (c, 1)
  std::uint64_t max_generations = 64;
  std::uint64_t seed = 0;
  SimMode mode = SimMode::Fast;

  // Throws std::invalid_argument on violated constraints; `a` is the law's
  // mean at zero density, needed to place n_K below max_generations.
  void validate(double a) const;

  bool operator==(const SimConfig&) const = default;

  std::int64_t early_horizon(double a) const {
    return branchcap::early_horizon(c_exponent, capacity, a);
  }
  std::int64_t detection_time(double a) const {
    return branchcap::detection_time(capacity, a);
  }
};

struct PathStats {
  std::uint64_t uniform_draws = 0;    // per-individual uniforms consumed
  std::uint64_t aggregate_draws = 0;  // O(1) distribution draws consumed
};

struct PopulationPath {
  std::vector<std::uint64_t> counts;  // Z_0..Z_n
  double capacity = 1.0;
  std::optional<std::uint64_t> extinct_at;
  PathStats stats;

  std::uint64_t count(std::size_t n) const { return counts.at(n); }
  double density(std::size_t n) const {
    return static_cast<double>(counts.at(n)) / capacity;
  }
  std::size_t generations() const { return counts.size() - 1; }
  std::vector<double> densities() const;
};

PopulationPath simulate_path(const OffspringLaw& law, const SimConfig& cfg);
PopulationPath simulate_exact(const OffspringLaw& law, const SimConfig& cfg);
// Falls back to exact sampling (recorded in PathStats) for laws without an
// aggregate form.
PopulationPath simulate_fast(const OffspringLaw& law, const SimConfig& cfg);

struct CoupledPaths {
  PopulationPath z;        // true capacity-regulated process
  PopulationPath z_tilde;  // Galton-Watson comparison, limit law throughout
  PopulationPath z_gamma;  // lower process, offspring law frozen at K^{gamma-1}
  std::optional<std::uint64_t> tau;  // inf{n : X_n > K^{gamma-1}}
  std::optional<std::uint64_t> nu;   // inf{n : Ztilde_n > K^gamma}

  // Pointwise sandwich: Zgamma_n <= Z_n for n <= tau, Z_n <= Ztilde_n and
  // Zgamma_n <= Ztilde_n everywhere.
  bool sandwich_holds() const;
};

// All three processes read the identical uniform for individual j of
// generation n; exact mode only.
CoupledPaths simulate_coupled(const OffspringLaw& law, const SimConfig& cfg);

// Extends a path in place with exact per-individual sampling up to
// `horizon`; generation indices continue the path's uniform stream, so the
// extension realizes the same process on the same probability space.
void extend_exact(const OffspringLaw& law, PopulationPath& path, const SimConfig& cfg,
                  std::uint64_t horizon);

struct MartingaleTrace {
  std::vector<double> increments;  // eps_n = sqrt(K) (X_n - f^K(X_{n-1}))
  std::vector<double> variances;   // sigma_K^2(X_{n-1})
};

MartingaleTrace decompose_martingale(const PopulationPath& path,
                                     const OffspringLaw& law, double capacity);

// ---- ensemble driver ---------------------------------------------------

enum class Observable { Count, Density, NormalizedCount };  // Z_n, X_n, Z_n/a^n

struct IndexSpec {
  enum class Kind {
    Absolute,        // n = shift
    EarlyHorizon,    // n_K = floor(c log_a K)
    DetectionTime,   // floor(log_a K) + shift
    SublogSqrt,      // floor(sqrt(log_a K))
    SublogLogLog,    // floor(log_a log_a K)
    SublogConstant,  // shift
  };
  Kind kind = Kind::DetectionTime;
  std::int64_t shift = 0;

  std::int64_t resolve(const SimConfig& cfg, double a) const;
};

// R independent samples of the observable, reproducible from (seed,
// replicate index) and independent of the thread count.
std::vector<double> replicate(const OffspringLaw& law, const SimConfig& cfg,
                              std::uint64_t replicates, Observable observable,
                              IndexSpec index, unsigned threads = 1);

}  // namespace branchcap
