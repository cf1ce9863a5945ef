#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "branchcap/indexing.hpp"
#include "branchcap/rng.hpp"
#include "branchcap/simulate.hpp"
#include "branchcap/stats.hpp"
#include "test_util.hpp"

using namespace branchcap;

namespace {

SimConfig base_config(double K, std::uint64_t z0, std::uint64_t gens,
                      std::uint64_t seed, SimMode mode = SimMode::Fast) {
  SimConfig cfg;
  cfg.capacity = K;
  cfg.initial_count = z0;
  cfg.max_generations = gens;
  cfg.seed = seed;
  cfg.mode = mode;
  return cfg;
}

}  // namespace

TEST_CASE("index conventions") {
  CHECK(detection_time(1 << 20, 2.0) == 20);
  CHECK(early_horizon(0.6, 1 << 20, 2.0) == 12);
  CHECK(late_stage_length(0.6, 1 << 20, 2.0) == 8);
  CHECK(detection_frac(1 << 20, 2.0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(tolerant_floor(0.1 * 1e6) == 100000);
  CHECK(tolerant_floor(2.9999999999) == 3);  // within the documented slack
}

TEST_CASE("config constraints") {
  const double a = 2.0;
  SimConfig cfg = base_config(1e4, 1, 32, 1);
  CHECK_NOTHROW(cfg.validate(a));
  cfg.c_exponent = 0.5;
  CHECK_THROWS_WITH_AS(cfg.validate(a), "c must exceed 1/2", std::invalid_argument);
  cfg = base_config(1e4, 1, 32, 1);
  cfg.gamma_exponent = 0.55;
  CHECK_THROWS_AS(cfg.validate(a), std::invalid_argument);
  cfg = base_config(1e4, 1, 32, 1);
  cfg.gamma_exponent = 1.0;
  CHECK_THROWS_AS(cfg.validate(a), std::invalid_argument);
  cfg = base_config(0.5, 1, 32, 1);
  CHECK_THROWS_AS(cfg.validate(a), std::invalid_argument);
  // the early-stage horizon must fit where the coupling is constructed
  const auto law = OffspringLaw::binary_split(0.5, 1.0);
  auto tight = base_config(1e4, 1, 4, 1, SimMode::Exact);  // n_K = 13 > 4
  CHECK_THROWS_AS(simulate_coupled(law, tight), std::invalid_argument);
}

TEST_CASE("deterministic doubling") {
  const auto law = OffspringLaw::binary_split(1.0, 0.0);
  const auto cfg = base_config(1 << 20, 1, 10, 123);
  const auto fast = simulate_fast(law, cfg);
  const auto exact = simulate_exact(law, cfg);
  CHECK(fast.counts.back() == 1024);
  CHECK(exact.counts.back() == 1024);
  CHECK(fast.counts == exact.counts);  // both deterministic, any seed
  CHECK_FALSE(fast.extinct_at);
}

TEST_CASE("extinction probability after one generation") {
  // P(Z_1 = 0 | Z_0 = 1) = e^{-2} for the Poisson law with a = 2 at x ~ 0
  const auto law = OffspringLaw::beverton_holt_poisson(2.0, 1.0);
  const int n = 100000;
  int extinct = 0;
  for (int r = 0; r < n; ++r) {
    auto cfg = base_config(1e9, 1, 1, 1000 + r);
    if (simulate_fast(law, cfg).counts.back() == 0) ++extinct;
  }
  CHECK(testutil::frequency_within(extinct / static_cast<double>(n),
                                   std::exp(-2.0), n));
}

TEST_CASE("extinction is absorbing") {
  const auto law = OffspringLaw::beverton_holt_poisson(1.5, 1.0);
  int seen_extinct = 0;
  for (int r = 0; r < 200; ++r) {
    const auto path = simulate_fast(law, base_config(1e6, 1, 20, 5000 + r));
    bool dead = false;
    for (std::size_t n = 0; n < path.counts.size(); ++n) {
      if (dead) CHECK(path.counts[n] == 0);
      if (path.counts[n] == 0) {
        dead = true;
        if (path.extinct_at) CHECK(*path.extinct_at <= n);
      }
    }
    if (dead) {
      ++seen_extinct;
      CHECK(path.extinct_at.has_value());
    }
  }
  CHECK(seen_extinct > 0);  // q ~ 0.58 for a = 1.5: plenty of extinctions
}

TEST_CASE("fast aggregate matches the conditional mean") {
  const auto law = OffspringLaw::beverton_holt_poisson(2.0, 1.0);
  const double K = 1e4;
  const std::uint64_t z = 2000;  // density 0.2
  const int n = 100000;
  std::vector<double> next(n);
  for (int r = 0; r < n; ++r) {
    auto cfg = base_config(K, z, 1, 40000 + r);
    next[r] = static_cast<double>(simulate_fast(law, cfg).counts.back());
  }
  const double expected = static_cast<double>(z) * law.mean(z / K, K);
  CHECK(testutil::mean_within(next, expected));
}

TEST_CASE("exact and fast modes agree in distribution") {
  // pre-registered: two-sample KS at the 1% level on Z_{n_K}, R = 2000
  for (const auto& law : {OffspringLaw::beverton_holt_poisson(2.0, 1.0),
                          OffspringLaw::binary_split(0.6, 1.5)}) {
    const double K = 1e4;
    const std::int64_t nk = early_horizon(0.6, K, law.malthusian());
    const int reps = 2000;
    std::vector<double> exact_z(reps), fast_z(reps);
    for (int r = 0; r < reps; ++r) {
      auto cfg = base_config(K, 1, static_cast<std::uint64_t>(nk), 0);
      cfg.seed = rng::derive_key(101, "modes/exact", r);
      cfg.mode = SimMode::Exact;
      exact_z[r] = static_cast<double>(simulate_path(law, cfg).counts.back());
      cfg.seed = rng::derive_key(101, "modes/fast", r);
      cfg.mode = SimMode::Fast;
      fast_z[r] = static_cast<double>(simulate_path(law, cfg).counts.back());
    }
    CHECK(ks_two_sample(exact_z, fast_z).p_value > 0.01);
  }
}

TEST_CASE("draw counts record the per-mode cost") {
  const auto law = OffspringLaw::beverton_holt_poisson(2.0, 1.0);
  const auto cfg = base_config(1e6, 1, 12, 77);

  auto exact = simulate_exact(law, cfg);
  std::uint64_t parents_total = 0;
  for (std::size_t n = 0; n + 1 < exact.counts.size(); ++n)
    parents_total += exact.counts[n];
  CHECK(exact.stats.uniform_draws == parents_total);  // Theta(Z) per generation
  CHECK(exact.stats.aggregate_draws == 0);

  auto fast = simulate_fast(law, cfg);
  std::uint64_t live_gens = 0;
  for (std::size_t n = 0; n + 1 < fast.counts.size(); ++n)
    if (fast.counts[n] > 0) ++live_gens;
  CHECK(fast.stats.aggregate_draws == live_gens);  // Theta(1) per generation
  CHECK(fast.stats.uniform_draws == 0);

  // tabulated laws fall back to exact sampling
  const auto tab = OffspringLaw::user_tabulated({{0.0, {0.0, 0.4, 0.6}}});
  auto fb = simulate_fast(tab, base_config(1e4, 1, 6, 3));
  CHECK(fb.stats.uniform_draws > 0);
  CHECK(fb.stats.aggregate_draws == 0);
}

TEST_CASE("count overflow aborts with a diagnostic") {
  const auto law = OffspringLaw::binary_split(1.0, 0.0);
  auto cfg = base_config(1e6, std::uint64_t{1} << 61, 2, 1);
  CHECK_THROWS_AS(simulate_fast(law, cfg), std::overflow_error);
  const auto poisson = OffspringLaw::beverton_holt_poisson(4.0, 1e-15);
  auto grow = base_config(1e6, std::uint64_t{1} << 61, 4, 1);
  CHECK_THROWS_AS(simulate_fast(poisson, grow), std::overflow_error);
}

TEST_CASE("coupled sandwich holds pointwise") {
  for (const auto& law : {OffspringLaw::binary_split(0.5, 1.0),
                          OffspringLaw::beverton_holt_poisson(2.0, 1.0)}) {
    const double K = 1e4;
    const double a = law.malthusian();
    const std::int64_t nk = early_horizon(0.6, K, a);
    int tau_hits = 0;
    const int reps = 3000;
    for (int r = 0; r < reps; ++r) {
      auto cfg = base_config(K, 1, static_cast<std::uint64_t>(nk), 0, SimMode::Exact);
      cfg.seed = rng::derive_key(55, "sandwich", r);
      const auto cp = simulate_coupled(law, cfg);
      CHECK(cp.sandwich_holds());
      if (cp.tau && static_cast<std::int64_t>(*cp.tau) <= nk) ++tau_hits;
      // the lower process reproduces at frozen density, the upper with the
      // limit law; all three agree at generation 0
      CHECK(cp.z.counts[0] == cp.z_tilde.counts[0]);
      CHECK(cp.z.counts[0] == cp.z_gamma.counts[0]);
    }
    // stopping-time bound: P(tau <= n_K) <= 2 K^{c-gamma}
    const double bound = 2.0 * std::pow(K, 0.6 - 0.8);
    CHECK(tau_hits / static_cast<double>(reps) <= bound);
  }
}

TEST_CASE("coupled processes coincide without density dependence") {
  const auto law = OffspringLaw::binary_split(0.7, 0.0);  // beta = 0
  auto cfg = base_config(1e4, 3, 12, 99, SimMode::Exact);
  const auto cp = simulate_coupled(law, cfg);
  CHECK(cp.z.counts == cp.z_tilde.counts);
}

TEST_CASE("exact path extension continues the same stream") {
  const auto law = OffspringLaw::binary_split(0.5, 1.0);
  auto cfg = base_config(1e4, 1, 8, 42, SimMode::Exact);
  auto head = simulate_exact(law, cfg);
  extend_exact(law, head, cfg, 14);
  CHECK(head.counts.size() == 15);

  auto cfg_full = cfg;
  cfg_full.max_generations = 14;
  const auto full = simulate_exact(law, cfg_full);
  CHECK(head.counts == full.counts);  // same probability space realization
}

TEST_CASE("martingale decomposition") {
  const auto law = OffspringLaw::binary_split(1.0, 0.0);
  const auto path = simulate_fast(law, base_config(1 << 16, 2, 8, 5));
  const auto trace = decompose_martingale(path, law, 1 << 16);
  for (double eps : trace.increments) CHECK(eps == doctest::Approx(0.0));

  // one-step conditional moments at fixed density x0 = 0.25:
  // E[eps] = 0 and Var[eps] = x0 sigma_K^2(x0)
  const auto noisy = OffspringLaw::beverton_holt_poisson(2.0, 1.0);
  const double K = 1e4, x0 = 0.25;
  const int reps = 30000;
  std::vector<double> eps(reps);
  for (int r = 0; r < reps; ++r) {
    auto cfg = base_config(K, static_cast<std::uint64_t>(x0 * K), 1, 0);
    cfg.seed = rng::derive_key(7, "martingale", r);
    const auto p = simulate_fast(noisy, cfg);
    eps[r] = decompose_martingale(p, noisy, K).increments[0];
  }
  CHECK(testutil::mean_within(eps, 0.0));
  CHECK(testutil::variance_within(eps, x0 * noisy.variance(x0, K)));
  // the reported per-step variance field carries sigma_K^2(X_{n-1})
  auto cfg = base_config(K, static_cast<std::uint64_t>(x0 * K), 1, 12);
  const auto p = simulate_fast(noisy, cfg);
  CHECK(decompose_martingale(p, noisy, K).variances[0] ==
        doctest::Approx(noisy.variance(x0, K)));
}

TEST_CASE("normalized counts have a flat mean across generations") {
  // with beta = 0 the process is the comparison process itself
  const auto law = OffspringLaw::binary_split(0.5, 0.0);
  const auto cfg = base_config(1e6, 3, 12, 31);
  for (std::int64_t n : {1, 5, 12}) {
    IndexSpec at;
    at.kind = IndexSpec::Kind::Absolute;
    at.shift = n;
    const auto w = replicate(law, cfg, 4000, Observable::NormalizedCount, at);
    CHECK(testutil::mean_within(w, 3.0));
  }
}

TEST_CASE("replicate contract") {
  const auto law = OffspringLaw::beverton_holt_poisson(2.0, 1.0);
  const auto cfg = base_config(1e4, 1, 16, 2024);
  IndexSpec at;
  at.kind = IndexSpec::Kind::EarlyHorizon;

  const auto first = replicate(law, cfg, 100, Observable::Density, at);
  const auto second = replicate(law, cfg, 100, Observable::Density, at);
  CHECK(first == second);  // bit-identical reruns

  const auto threaded = replicate(law, cfg, 100, Observable::Density, at, 4);
  CHECK(first == threaded);  // thread count cannot change results

  // R = 1 equals a single path observable
  const auto one = replicate(law, cfg, 1, Observable::Count, at);
  SimConfig single = cfg;
  single.seed = rng::derive_key(cfg.seed, "replicate", 0);
  single.max_generations =
      static_cast<std::uint64_t>(cfg.early_horizon(law.malthusian()));
  const auto path = simulate_path(law, single);
  CHECK(one[0] == static_cast<double>(path.counts.back()));

  IndexSpec beyond;
  beyond.kind = IndexSpec::Kind::Absolute;
  beyond.shift = 99;
  CHECK_THROWS_AS(replicate(law, cfg, 10, Observable::Count, beyond),
                  std::invalid_argument);
}
