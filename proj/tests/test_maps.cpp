#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "branchcap/maps.hpp"
#include "test_util.hpp"

using namespace branchcap;

namespace {

// Closed-form iterate of the Beverton-Holt map f(x) = a x / (1 + b x):
// f_n(x) = a^n x / (1 + b x (a^n - 1)/(a - 1)).  Verified by induction in
// the first test below, then used as the oracle everywhere else.
double bh_iterate(double a, double b, double x, std::uint64_t n) {
  const double an = std::pow(a, static_cast<double>(n));
  return an * x / (1.0 + b * x * (an - 1.0) / (a - 1.0));
}

// Closed-form h for the Beverton-Holt map: the n -> infinity limit of
// bh_iterate(x / a^n).
double bh_h(double a, double b, double x) { return x / (1.0 + b * x / (a - 1.0)); }

}  // namespace

TEST_CASE("induction step validates the Beverton-Holt iterate oracle") {
  const double a = 2.0, b = 1.0;
  auto f = [&](double x) { return a * x / (1.0 + b * x); };
  for (double x : {0.0, 0.01, 0.1, 0.5, 1.0, 3.0}) {
    for (std::uint64_t n = 0; n < 12; ++n) {
      CHECK(f(bh_iterate(a, b, x, n)) ==
            doctest::Approx(bh_iterate(a, b, x, n + 1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("iterate_limit matches the closed form") {
  const IteratedMap map(OffspringLaw::beverton_holt_poisson(2.0, 1.0));
  CHECK(map.iterate_limit(0.1, 3) ==
        doctest::Approx(0.47058823529411764).epsilon(1e-12));  // 0.8 / 1.7
  for (double x : {0.05, 0.3, 0.9}) {
    for (std::uint64_t n : {0ULL, 1ULL, 5ULL, 9ULL}) {
      CHECK(map.iterate_limit(x, n) ==
            doctest::Approx(bh_iterate(2.0, 1.0, x, n)).epsilon(1e-12));
    }
  }
  CHECK(map.iterate_limit(0.37, 0) == 0.37);     // identity at n = 0
  CHECK(map.iterate_limit(1.0, 7) == doctest::Approx(1.0));  // fixed point x* = 1
}

TEST_CASE("compute_h reproduces the closed-form limit function") {
  const IteratedMap map(OffspringLaw::beverton_holt_poisson(2.0, 1.0));
  const auto h = compute_h(map, 2.0, 513, 1e-8);
  CHECK(h(0.0) == 0.0);
  CHECK(h(1.0) == doctest::Approx(0.5).epsilon(1e-7));
  double sup = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double x = 2.0 * i / 4000.0;
    sup = std::max(sup, std::abs(h(x) - bh_h(2.0, 1.0, x)));
  }
  CHECK(sup < 1e-6);
}

TEST_CASE("Schroeder residual stays below 10x the tolerance") {
  const double tol = 1e-8;
  for (const auto& law : {OffspringLaw::binary_split(0.5, 1.0),
                          OffspringLaw::binary_split(1.0, 1.0),
                          OffspringLaw::beverton_holt_poisson(2.0, 1.0)}) {
    const IteratedMap map(law);
    const auto h = compute_h(map, 4.0, kDefaultSchroederKnots, tol);
    const double a = map.malthusian();
    for (std::size_t i = 0; i < h.knot_count(); ++i) {
      const double x = h.knots()[i];
      CHECK(std::abs(h.values()[i] - map.limit(h(x / a))) < 10 * tol);
    }
  }
}

TEST_CASE("iteration cap guards barely supercritical maps") {
  // a = 1.05 converges like 1.05^-n: far beyond the cap at tol = 1e-12
  const IteratedMap map(OffspringLaw::beverton_holt_poisson(1.05, 1.0));
  CHECK_THROWS_AS(compute_h(map, 0.1, 65, 1e-12), std::runtime_error);
}

TEST_CASE("monotone violation of the iterates is reported") {
  // mean increasing in density: f(x/a) > x for some x, so the iterate
  // sequence rises instead of falling
  const auto law = OffspringLaw::user_tabulated({
      {0.0, {0.0, 0.8, 0.2}},   // mean 1.2 at the origin
      {0.5, {0.0, 0.2, 0.8}},   // mean 1.8 at higher density
  });
  const IteratedMap map(law);
  CHECK_THROWS_AS(compute_h(map, 2.0, 65, 1e-8), std::runtime_error);
}

TEST_CASE("h evaluation is monotone and exact at knots") {
  const IteratedMap map(OffspringLaw::binary_split(0.5, 1.0));
  const auto h = compute_h(map, 4.0, 257, 1e-8);
  for (std::size_t i = 0; i < h.knot_count(); ++i)
    CHECK(h(h.knots()[i]) == h.values()[i]);
  auto g = testutil::prng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const double x1 = testutil::uniform(g, 0.0, 4.0);
    const double x2 = testutil::uniform(g, 0.0, 4.0);
    if (x1 == x2) continue;
    const double lo = std::min(x1, x2), hi = std::max(x1, x2);
    CHECK(h(lo) < h(hi));
  }
  CHECK_THROWS_AS(h(4.5), std::out_of_range);
  CHECK_THROWS_AS(h(-0.1), std::out_of_range);
}

TEST_CASE("h inversion") {
  const IteratedMap map(OffspringLaw::beverton_holt_poisson(2.0, 1.0));
  const auto h = compute_h(map, 2.0, 513, 1e-8);
  CHECK(h.inverse(0.5) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(h.inverse(0.0) == 0.0);
  for (int i = 1; i < 20; ++i) {
    const double x = 2.0 * i / 20.0;
    CHECK(std::abs(h.inverse(h(x)) - x) < 2e-8 + 2 * h.tol());
  }
  CHECK_THROWS_AS(h.inverse(h.value_max() + 0.1), std::out_of_range);
  CHECK_THROWS_AS(h.inverse(-0.01), std::out_of_range);
}

TEST_CASE("fixed points and stability") {
  const IteratedMap bhp(OffspringLaw::beverton_holt_poisson(2.0, 1.0));
  const auto roots = fixed_points(bhp, 0.0, 10.0);
  REQUIRE(roots.size() == 1);
  CHECK(roots[0].x == doctest::Approx(1.0).epsilon(1e-9));  // a/(1+bx) = 1
  CHECK(roots[0].derivative == doctest::Approx(0.5).epsilon(1e-5));  // 1/a
  CHECK(roots[0].stability == Stability::Attracting);

  // m(x) = 1 + p0/(1+x) > 1 everywhere: no positive fixed point
  const IteratedMap bs(OffspringLaw::binary_split(0.5, 1.0));
  CHECK(fixed_points(bs, 0.0, 50.0).empty());

  const IteratedMap bhp3(OffspringLaw::beverton_holt_poisson(3.0, 2.0));
  const auto roots3 = fixed_points(bhp3, 0.0, 10.0);
  REQUIRE(roots3.size() == 1);
  CHECK(roots3[0].x == doctest::Approx(1.0).epsilon(1e-9));  // (a-1)/b
  CHECK(roots3[0].derivative == doctest::Approx(1.0 / 3.0).epsilon(1e-5));

  REQUIRE(default_h_range(bhp).has_value());
  CHECK(*default_h_range(bhp) == doctest::Approx(2.0));
  CHECK_FALSE(default_h_range(bs));
}

TEST_CASE("slope of h near the origin stays above the exponential floor") {
  for (const auto& law : {OffspringLaw::binary_split(0.5, 1.0),
                          OffspringLaw::binary_split(1.0, 1.0),
                          OffspringLaw::beverton_holt_poisson(2.0, 1.0)}) {
    const IteratedMap map(law);
    const double a = map.malthusian();
    const auto h = compute_h(map, 2.0, 1025, 1e-8);
    const auto fit = fit_slope_floor(map, 1.0);
    REQUIRE(fit.domain_end > 0.0);
    double min_slope = std::numeric_limits<double>::infinity();
    const auto& xs = h.knots();
    const auto& ys = h.values();
    for (std::size_t i = 0; i + 1 < xs.size() && xs[i + 1] <= fit.domain_end; ++i)
      min_slope = std::min(min_slope, (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]));
    CHECK(min_slope >= std::exp(-a) - 1e-3);
  }
}

TEST_CASE("limit survives o(a^-n) perturbations of the argument") {
  const IteratedMap map(OffspringLaw::beverton_holt_poisson(2.0, 1.0));
  const double x = 1.3;
  const double target = bh_h(2.0, 1.0, x);
  double prev = std::numeric_limits<double>::infinity();
  for (std::uint64_t n : {5ULL, 10ULL, 20ULL, 40ULL}) {
    const double an = std::pow(2.0, -static_cast<double>(n));
    const double dev =
        std::abs(map.iterate_limit(x * an + an / static_cast<double>(n), n) - target);
    CHECK(dev < prev);
    prev = dev;
  }
  CHECK(prev < 1e-2);
}

TEST_CASE("capacity-K iterates stay within the geometric envelope") {
  const auto law = OffspringLaw::binary_split(0.5, 1.0, 1.0);  // kappa = 1
  const IteratedMap map(law);
  const double a = map.malthusian();
  // C = max over grid and K of sqrt(K) |f^K - f|
  double c_fit = 0.0;
  for (double K : {1e2, 1e4, 1e6}) {
    for (int i = 0; i <= 100; ++i) {
      const double x = i / 100.0;
      c_fit = std::max(c_fit,
                       std::sqrt(K) * std::abs(map.at_capacity(x, K) - map.limit(x)));
    }
  }
  for (double K : {1e2, 1e4, 1e6}) {
    for (std::uint64_t n = 1; n <= 8; ++n) {
      double gap = 0.0;
      for (int i = 0; i <= 100; ++i) {
        const double x = i / 100.0;
        gap = std::max(gap, std::abs(map.iterate_at_capacity(x, n, K) -
                                     map.iterate_limit(x, n)));
      }
      const double envelope = c_fit / std::sqrt(K) *
                              (std::pow(a, static_cast<double>(n)) - 1.0) / (a - 1.0);
      CHECK(gap <= envelope * (1.0 + 1e-9) + 1e-12);
    }
  }
  // kappa = 0: the two maps coincide
  const IteratedMap plain(OffspringLaw::binary_split(0.5, 1.0));
  for (double K : {1e2, 1e6})
    for (int i = 0; i <= 20; ++i)
      CHECK(plain.iterate_at_capacity(i / 20.0, 5, K) ==
            plain.iterate_limit(i / 20.0, 5));
}

TEST_CASE("h table CSV round trip is exact") {
  const auto law = OffspringLaw::beverton_holt_poisson(2.0, 1.0);
  const IteratedMap map(law);
  const auto h = compute_h(map, 2.0, 129, 1e-8);
  std::ostringstream csv;
  h.write_csv(csv);
  std::istringstream in(csv.str());
  const auto loaded = SchroederH::from_csv(in, h.sidecar(law));
  CHECK(loaded.knots() == h.knots());
  CHECK(loaded.values() == h.values());
  CHECK(loaded.truncation_level() == h.truncation_level());
  CHECK(loaded.malthusian() == h.malthusian());
}
