#include "branchcap/simulate.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "branchcap/parallel.hpp"
#include "branchcap/rng.hpp"

namespace branchcap {

namespace {

constexpr std::string_view kSimTag = "simulator";

[[noreturn]] void overflow_abort(std::uint64_t generation) {
  std::ostringstream msg;
  msg << "population count exceeded the safe range at generation " << generation
      << "; reduce capacity, the horizon, or the starting number";
  throw std::overflow_error(msg.str());
}

std::uint64_t checked_add(std::uint64_t acc, std::uint64_t inc, std::uint64_t gen) {
  if (acc > kMaxCount - inc) overflow_abort(gen);
  return acc + inc;
}

// One generation of per-individual quantile draws under `sampler`.
std::uint64_t exact_generation(const OffspringSampler& sampler, std::uint64_t parents,
                               std::uint64_t gen_key, std::uint64_t gen,
                               PathStats& stats) {
  std::uint64_t total = 0;
  for (std::uint64_t j = 1; j <= parents; ++j) {
    const double u = rng::uniform_in_generation(gen_key, j);
    total = checked_add(total, sampler(u), gen);
  }
  stats.uniform_draws += parents;
  return total;
}

// One generation via the closed-form aggregate: a sum of z BinarySplit draws
// is z + Binomial(z, p), a sum of z Poisson(mu) draws is Poisson(z mu).
std::uint64_t aggregate_generation(const OffspringLaw& law, std::uint64_t parents,
                                   double x, double capacity, rng::CounterEngine& eng,
                                   std::uint64_t gen, PathStats& stats) {
  stats.aggregate_draws += 1;
  switch (law.family()) {
    case LawFamily::BinarySplit: {
      const double p = law.mean(x, capacity) - 1.0;
      std::uint64_t successes;
      if (p >= 1.0) {
        successes = parents;
      } else if (p <= 0.0) {
        successes = 0;
      } else {
        std::binomial_distribution<std::uint64_t> bin(parents, p);
        successes = bin(eng);
      }
      if (parents > kMaxCount - successes) overflow_abort(gen);
      return parents + successes;
    }
    case LawFamily::BevertonHoltPoisson: {
      const double mu = static_cast<double>(parents) * law.mean(x, capacity);
      if (mu <= 0.0) return 0;
      std::poisson_distribution<std::uint64_t> poi(mu);
      const std::uint64_t next = poi(eng);
      if (next > kMaxCount) overflow_abort(gen);
      return next;
    }
    case LawFamily::UserTabulated:
      break;
  }
  throw std::logic_error("aggregate_generation: law has no aggregate form");
}

// Core loop; constraint checking happens at the public entry points.
PopulationPath run_path(const OffspringLaw& law, const SimConfig& cfg, bool exact) {
  PopulationPath path;
  path.capacity = cfg.capacity;
  path.counts.reserve(cfg.max_generations + 1);
  path.counts.push_back(cfg.initial_count);

  const std::uint64_t key = rng::derive_key(cfg.seed, kSimTag);
  for (std::uint64_t n = 1; n <= cfg.max_generations; ++n) {
    const std::uint64_t parents = path.counts.back();
    if (parents == 0) {
      path.counts.push_back(0);
      continue;
    }
    const double x = static_cast<double>(parents) / cfg.capacity;
    std::uint64_t next;
    if (exact) {
      const auto sampler = law.make_sampler(x, cfg.capacity);
      next = exact_generation(sampler, parents, rng::generation_key(key, n), n,
                              path.stats);
    } else {
      rng::CounterEngine eng(rng::generation_key(key, n));
      next = aggregate_generation(law, parents, x, cfg.capacity, eng, n, path.stats);
    }
    path.counts.push_back(next);
    if (next == 0 && !path.extinct_at) path.extinct_at = n;
  }
  return path;
}

}  // namespace

void SimConfig::validate(double a) const {
  if (!(capacity >= 1.0))
    throw std::invalid_argument("capacity must be >= 1");
  if (initial_count < 1)
    throw std::invalid_argument("initial count must be >= 1");
  if (!(c_exponent > 0.5))
    throw std::invalid_argument("c must exceed 1/2");
  if (!(c_exponent < gamma_exponent))
    throw std::invalid_argument("gamma must exceed c");
  if (!(gamma_exponent < 1.0))
    throw std::invalid_argument("gamma must be below 1");
  if (!(a > 1.0))
    throw std::invalid_argument("law must be supercritical (a > 1)");
}

std::vector<double> PopulationPath::densities() const {
  std::vector<double> xs(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    xs[i] = static_cast<double>(counts[i]) / capacity;
  return xs;
}

PopulationPath simulate_exact(const OffspringLaw& law, const SimConfig& cfg) {
  cfg.validate(law.malthusian());
  return run_path(law, cfg, /*exact=*/true);
}

PopulationPath simulate_fast(const OffspringLaw& law, const SimConfig& cfg) {
  cfg.validate(law.malthusian());
  // UserTabulated laws have no aggregate identity; fall back to exact
  // sampling.  The consumed draw counts record which route ran.
  if (!law.supports_aggregate()) return run_path(law, cfg, /*exact=*/true);
  return run_path(law, cfg, /*exact=*/false);
}

PopulationPath simulate_path(const OffspringLaw& law, const SimConfig& cfg) {
  return cfg.mode == SimMode::Exact ? simulate_exact(law, cfg)
                                    : simulate_fast(law, cfg);
}

bool CoupledPaths::sandwich_holds() const {
  const std::size_t n = z.counts.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (z.counts[i] > z_tilde.counts[i]) return false;
    if (z_gamma.counts[i] > z_tilde.counts[i]) return false;
    const bool below_tau = !tau || i <= *tau;
    if (below_tau && z_gamma.counts[i] > z.counts[i]) return false;
  }
  return true;
}

CoupledPaths simulate_coupled(const OffspringLaw& law, const SimConfig& cfg) {
  cfg.validate(law.malthusian());
  // the early-stage horizon must fit inside the simulated window
  const std::int64_t nk = cfg.early_horizon(law.malthusian());
  if (nk < 0 || static_cast<std::uint64_t>(nk) > cfg.max_generations)
    throw std::invalid_argument("horizon n_K exceeds max_generations");
  CoupledPaths out;
  const double K = cfg.capacity;
  const double freeze_density = std::pow(K, cfg.gamma_exponent - 1.0);
  const double tilde_cap = std::pow(K, cfg.gamma_exponent);

  for (PopulationPath* p : {&out.z, &out.z_tilde, &out.z_gamma}) {
    p->capacity = K;
    p->counts.reserve(cfg.max_generations + 1);
    p->counts.push_back(cfg.initial_count);
  }

  // The eta law (limit reproduction) and the frozen law are density-free;
  // their samplers are built once.
  const auto eta_sampler = law.make_sampler(0.0, kInfiniteCapacity);
  const auto gamma_sampler = law.make_sampler(freeze_density, K);

  const std::uint64_t key = rng::derive_key(cfg.seed, kSimTag);
  for (std::uint64_t n = 1; n <= cfg.max_generations; ++n) {
    const std::uint64_t pz = out.z.counts.back();
    const std::uint64_t pt = out.z_tilde.counts.back();
    const std::uint64_t pg = out.z_gamma.counts.back();
    const double x_prev = static_cast<double>(pz) / K;
    const auto z_sampler = law.make_sampler(x_prev, K);

    const std::uint64_t gen_key = rng::generation_key(key, n);
    const std::uint64_t widest = std::max({pz, pt, pg});
    std::uint64_t sz = 0, st = 0, sg = 0;
    for (std::uint64_t j = 1; j <= widest; ++j) {
      const double u = rng::uniform_in_generation(gen_key, j);
      if (j <= pz) sz = checked_add(sz, z_sampler(u), n);
      if (j <= pt) st = checked_add(st, eta_sampler(u), n);
      if (j <= pg) sg = checked_add(sg, gamma_sampler(u), n);
    }
    out.z.stats.uniform_draws += widest;

    out.z.counts.push_back(sz);
    out.z_tilde.counts.push_back(st);
    out.z_gamma.counts.push_back(sg);
    if (sz == 0 && !out.z.extinct_at) out.z.extinct_at = n;
    if (st == 0 && !out.z_tilde.extinct_at) out.z_tilde.extinct_at = n;
    if (sg == 0 && !out.z_gamma.extinct_at) out.z_gamma.extinct_at = n;

    if (!out.tau && static_cast<double>(sz) / K > freeze_density) out.tau = n;
    if (!out.nu && static_cast<double>(st) > tilde_cap) out.nu = n;
  }
  return out;
}

void extend_exact(const OffspringLaw& law, PopulationPath& path, const SimConfig& cfg,
                  std::uint64_t horizon) {
  const std::uint64_t key = rng::derive_key(cfg.seed, kSimTag);
  for (std::uint64_t n = path.generations() + 1; n <= horizon; ++n) {
    const std::uint64_t parents = path.counts.back();
    if (parents == 0) {
      path.counts.push_back(0);
      continue;
    }
    const double x = static_cast<double>(parents) / cfg.capacity;
    const auto sampler = law.make_sampler(x, cfg.capacity);
    const std::uint64_t next =
        exact_generation(sampler, parents, rng::generation_key(key, n), n, path.stats);
    path.counts.push_back(next);
    if (next == 0 && !path.extinct_at) path.extinct_at = n;
  }
}

MartingaleTrace decompose_martingale(const PopulationPath& path,
                                     const OffspringLaw& law, double capacity) {
  MartingaleTrace trace;
  const std::size_t gens = path.generations();
  trace.increments.reserve(gens);
  trace.variances.reserve(gens);
  const double sqrt_k = std::sqrt(capacity);
  for (std::size_t n = 1; n <= gens; ++n) {
    const double x_prev = static_cast<double>(path.counts[n - 1]) / capacity;
    const double x = static_cast<double>(path.counts[n]) / capacity;
    const double drift = x_prev * law.mean(x_prev, capacity);  // f^K(X_{n-1})
    trace.increments.push_back(sqrt_k * (x - drift));
    trace.variances.push_back(law.variance(x_prev, capacity));
  }
  return trace;
}

std::int64_t IndexSpec::resolve(const SimConfig& cfg, double a) const {
  switch (kind) {
    case Kind::Absolute:
      return shift;
    case Kind::EarlyHorizon:
      return cfg.early_horizon(a);
    case Kind::DetectionTime:
      return cfg.detection_time(a) + shift;
    case Kind::SublogSqrt:
      return tolerant_floor(std::sqrt(log_base(cfg.capacity, a)));
    case Kind::SublogLogLog:
      return tolerant_floor(log_base(log_base(cfg.capacity, a), a));
    case Kind::SublogConstant:
      return shift;
  }
  return 0;
}

std::vector<double> replicate(const OffspringLaw& law, const SimConfig& cfg,
                              std::uint64_t replicates, Observable observable,
                              IndexSpec index, unsigned threads) {
  const double a = law.malthusian();
  cfg.validate(a);
  const std::int64_t gen = index.resolve(cfg, a);
  if (gen < 0 || static_cast<std::uint64_t>(gen) > cfg.max_generations)
    throw std::invalid_argument("observable index lies beyond max_generations");

  SimConfig local = cfg;
  local.max_generations = static_cast<std::uint64_t>(gen);
  const bool exact = cfg.mode == SimMode::Exact || !law.supports_aggregate();

  std::vector<double> samples(replicates);
  const double norm = std::pow(a, static_cast<double>(gen));
  parallel_for(0, replicates, threads, [&](std::uint64_t r) {
    SimConfig mine = local;
    mine.seed = rng::derive_key(cfg.seed, "replicate", r);
    const PopulationPath path = run_path(law, mine, exact);
    const double z = static_cast<double>(path.counts.at(static_cast<std::size_t>(gen)));
    switch (observable) {
      case Observable::Count: samples[r] = z; break;
      case Observable::Density: samples[r] = z / mine.capacity; break;
      case Observable::NormalizedCount: samples[r] = z / norm; break;
    }
  });
  return samples;
}

}  // namespace branchcap
