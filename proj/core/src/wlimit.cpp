#include "branchcap/wlimit.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "branchcap/parallel.hpp"
#include "branchcap/rng.hpp"

namespace branchcap {

namespace {

constexpr std::string_view kWTag = "wlimit";
constexpr std::uint64_t kCountCap = std::uint64_t{1} << 62;

// One Galton-Watson path under the limit law, aggregate draws where the
// family allows, per-individual draws otherwise.
double gw_normalized_count(const OffspringLaw& law, std::uint64_t z0,
                           std::uint64_t n_trunc, std::uint64_t key) {
  const double a = law.malthusian();
  std::uint64_t z = z0;
  for (std::uint64_t n = 1; n <= n_trunc && z > 0; ++n) {
    rng::CounterEngine eng(rng::generation_key(key, n));
    std::uint64_t next = 0;
    switch (law.family()) {
      case LawFamily::BinarySplit: {
        const double p = law.mean(0.0) - 1.0;
        std::uint64_t extra;
        if (p >= 1.0) {
          extra = z;
        } else if (p <= 0.0) {
          extra = 0;
        } else {
          std::binomial_distribution<std::uint64_t> bin(z, p);
          extra = bin(eng);
        }
        next = z + extra;
        break;
      }
      case LawFamily::BevertonHoltPoisson: {
        std::poisson_distribution<std::uint64_t> poi(static_cast<double>(z) * a);
        next = poi(eng);
        break;
      }
      case LawFamily::UserTabulated: {
        const auto sampler = law.make_sampler(0.0, kInfiniteCapacity);
        for (std::uint64_t j = 1; j <= z; ++j) {
          next += sampler(rng::uniform_in_generation(rng::generation_key(key, n), j));
          if (next > kCountCap) throw std::overflow_error("GW population overflow");
        }
        break;
      }
    }
    if (next > kCountCap) throw std::overflow_error("GW population overflow");
    z = next;
  }
  return static_cast<double>(z) / std::pow(a, static_cast<double>(n_trunc));
}

}  // namespace

double WEnsemble::sample_mean() const {
  double s = 0.0;
  for (double v : values) s += v;
  return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

double WEnsemble::sample_variance() const {
  if (values.size() < 2) return 0.0;
  const double m = sample_mean();
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return s / static_cast<double>(values.size() - 1);
}

double WEnsemble::mass_at_zero() const {
  std::size_t zeros = 0;
  for (double v : values)
    if (v == 0.0) ++zeros;
  return values.empty() ? 0.0
                        : static_cast<double>(zeros) / static_cast<double>(values.size());
}

WEnsemble sample_w(const OffspringLaw& law, std::uint64_t z0, std::uint64_t n_trunc,
                   std::uint64_t seed, std::uint64_t replicates, unsigned threads) {
  if (!(law.malthusian() > 1.0))
    throw std::invalid_argument("sample_w: law must be supercritical (a > 1)");
  if (z0 < 1) throw std::invalid_argument("sample_w: z0 must be >= 1");
  WEnsemble out;
  out.truncation = n_trunc;
  out.z0 = z0;
  out.values.resize(replicates);
  parallel_for(0, replicates, threads, [&](std::uint64_t r) {
    const std::uint64_t key = rng::derive_key(seed, kWTag, r);
    out.values[r] = gw_normalized_count(law, z0, n_trunc, key);
  });
  return out;
}

WMoments w_moments(const OffspringLaw& law, std::uint64_t z0) {
  const double a = law.malthusian();
  if (!(a > 1.0))
    throw std::invalid_argument("w_moments: law must be supercritical (a > 1)");
  WMoments m;
  m.mean = static_cast<double>(z0);
  m.variance = static_cast<double>(z0) * law.variance(0.0) / (a * a - a);
  return m;
}

double extinction_probability(const OffspringLaw& law) {
  // q = lim phi^n(0); geometric convergence since phi'(q) < 1 for
  // supercritical laws.
  double q = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double next = law.pgf_limit(q);
    if (std::abs(next - q) < 1e-12) return next;
    q = next;
  }
  return q;
}

}  // namespace branchcap
