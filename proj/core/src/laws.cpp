#include "branchcap/laws.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace branchcap {

namespace {

constexpr double kPmfSumTol = 1e-12;
// Poisson CDF tables stop once the remaining tail is unobservable.
constexpr double kTailCutoff = 1e-16;
constexpr std::uint64_t kSupportCap = 1U << 14;

std::vector<double> poisson_cdf(double mu) {
  std::vector<double> cdf;
  if (mu <= 0.0) {
    cdf.push_back(1.0);
    return cdf;
  }
  double pmf = std::exp(-mu);
  double cum = pmf;
  cdf.push_back(cum);
  std::uint64_t k = 0;
  // Stop once the remaining tail is unobservable or the terms can no longer
  // move the sum; the final entry absorbs the truncated tail.
  while (1.0 - cum > kTailCutoff && (pmf > 1e-18 || cum < 0.5) && k < kSupportCap) {
    ++k;
    pmf *= mu / static_cast<double>(k);
    cum += pmf;
    cdf.push_back(std::min(cum, 1.0));
  }
  cdf.back() = 1.0;
  return cdf;
}

}  // namespace

std::string to_string(LawFamily family) {
  switch (family) {
    case LawFamily::BinarySplit: return "binary_split";
    case LawFamily::BevertonHoltPoisson: return "beverton_holt_poisson";
    case LawFamily::UserTabulated: return "user_tabulated";
  }
  return "unknown";
}

OffspringSampler::OffspringSampler(std::vector<double> cdf) : cdf_(std::move(cdf)) {
  if (cdf_.empty()) throw std::invalid_argument("sampler requires a non-empty CDF");
}

std::uint64_t OffspringSampler::operator()(double u) const {
  // Linear scan; conditional offspring counts are small (support <= a few
  // dozen for the shipped families).
  const std::size_t n = cdf_.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (cdf_[k] >= u && cdf_[k] > 0.0) return k;
  }
  return n - 1;
}

OffspringLaw OffspringLaw::binary_split(double p0, double beta, double kappa) {
  if (!(p0 > 0.0 && p0 <= 1.0))
    throw std::invalid_argument("binary_split: p0 must lie in (0, 1]");
  if (!(beta >= 0.0)) throw std::invalid_argument("binary_split: beta must be >= 0");
  if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be >= 0");
  OffspringLaw law;
  law.family_ = LawFamily::BinarySplit;
  law.p0_ = p0;
  law.beta_ = beta;
  law.kappa_ = kappa;
  return law;
}

OffspringLaw OffspringLaw::beverton_holt_poisson(double a, double b, double kappa) {
  if (!(a > 1.0))
    throw std::invalid_argument("beverton_holt_poisson: a must exceed 1");
  if (!(b > 0.0)) throw std::invalid_argument("beverton_holt_poisson: b must be > 0");
  if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be >= 0");
  OffspringLaw law;
  law.family_ = LawFamily::BevertonHoltPoisson;
  law.a_ = a;
  law.b_ = b;
  law.kappa_ = kappa;
  return law;
}

OffspringLaw OffspringLaw::user_tabulated(std::vector<TabulatedKnot> knots) {
  if (knots.empty()) throw std::invalid_argument("user_tabulated: no knots");
  std::sort(knots.begin(), knots.end(),
            [](const TabulatedKnot& l, const TabulatedKnot& r) { return l.x < r.x; });
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (knots[i].x == knots[i - 1].x)
      throw std::invalid_argument("user_tabulated: duplicate density knot");
  }
  for (const auto& knot : knots) {
    if (knot.x < 0.0) throw std::invalid_argument("user_tabulated: negative density knot");
    if (knot.pmf.empty()) throw std::invalid_argument("user_tabulated: empty pmf");
    double sum = 0.0;
    for (double p : knot.pmf) {
      if (!(p >= 0.0)) throw std::invalid_argument("user_tabulated: negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kPmfSumTol)
      throw std::invalid_argument("user_tabulated: pmf at knot does not sum to 1");
  }
  OffspringLaw law;
  law.family_ = LawFamily::UserTabulated;
  law.knots_ = std::move(knots);
  return law;
}

OffspringLaw OffspringLaw::user_tabulated_from_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("tabulated-law CSV: empty input");
  // header: x_knot,k,probability
  std::map<double, std::map<std::uint64_t, double>> table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double x = 0.0, p = 0.0;
    std::uint64_t k = 0;
    try {
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("x");
      x = std::stod(cell);
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("k");
      k = std::stoull(cell);
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("p");
      p = std::stod(cell);
    } catch (const std::exception&) {
      throw std::invalid_argument("tabulated-law CSV: malformed row at line " +
                                  std::to_string(line_no));
    }
    table[x][k] += p;
  }
  std::vector<TabulatedKnot> knots;
  knots.reserve(table.size());
  for (const auto& [x, masses] : table) {
    TabulatedKnot knot;
    knot.x = x;
    const std::uint64_t kmax = masses.rbegin()->first;
    knot.pmf.assign(kmax + 1, 0.0);
    for (const auto& [k, p] : masses) knot.pmf[k] = p;
    knots.push_back(std::move(knot));
  }
  return user_tabulated(std::move(knots));
}

const TabulatedKnot& OffspringLaw::knot_at_or_above(double x) const {
  // Nearest knot at or above x keeps the stochastic ordering in x intact;
  // queries beyond the last knot use the last knot.
  auto it = std::lower_bound(knots_.begin(), knots_.end(), x,
                             [](const TabulatedKnot& k, double v) { return k.x < v; });
  if (it == knots_.end()) return knots_.back();
  return *it;
}

double OffspringLaw::mean_factor(double capacity) const {
  if (kappa_ == 0.0 || std::isinf(capacity)) return 1.0;
  const double f = 1.0 - kappa_ / std::sqrt(capacity);
  if (f < 0.0)
    throw std::domain_error("mean depression kappa/sqrt(K) exceeds 1; capacity too small");
  return f;
}

double OffspringLaw::malthusian() const { return mean(0.0); }

double OffspringLaw::mean(double x, double capacity) const {
  if (!(x >= 0.0)) throw std::invalid_argument("density must be >= 0");
  switch (family_) {
    case LawFamily::BinarySplit:
      return 1.0 + p0_ * mean_factor(capacity) / (1.0 + beta_ * x);
    case LawFamily::BevertonHoltPoisson:
      return a_ * mean_factor(capacity) / (1.0 + b_ * x);
    case LawFamily::UserTabulated: {
      const auto& knot = knot_at_or_above(x);
      double m = 0.0;
      for (std::size_t k = 0; k < knot.pmf.size(); ++k)
        m += static_cast<double>(k) * knot.pmf[k];
      return m;
    }
  }
  return 0.0;
}

double OffspringLaw::variance(double x, double capacity) const {
  switch (family_) {
    case LawFamily::BinarySplit: {
      const double p = mean(x, capacity) - 1.0;  // success probability of the split
      return p * (1.0 - p);
    }
    case LawFamily::BevertonHoltPoisson:
      return mean(x, capacity);
    case LawFamily::UserTabulated: {
      const auto& knot = knot_at_or_above(x);
      double m = 0.0, m2 = 0.0;
      for (std::size_t k = 0; k < knot.pmf.size(); ++k) {
        const double kd = static_cast<double>(k);
        m += kd * knot.pmf[k];
        m2 += kd * kd * knot.pmf[k];
      }
      return m2 - m * m;
    }
  }
  return 0.0;
}

OffspringSampler OffspringLaw::make_sampler(double x, double capacity) const {
  if (!(x >= 0.0)) throw std::invalid_argument("density must be >= 0");
  switch (family_) {
    case LawFamily::BinarySplit: {
      const double p = mean(x, capacity) - 1.0;
      return OffspringSampler({0.0, 1.0 - p, 1.0});
    }
    case LawFamily::BevertonHoltPoisson:
      return OffspringSampler(poisson_cdf(mean(x, capacity)));
    case LawFamily::UserTabulated: {
      const auto& knot = knot_at_or_above(x);
      std::vector<double> cdf(knot.pmf.size());
      double cum = 0.0;
      for (std::size_t k = 0; k < knot.pmf.size(); ++k) {
        cum += knot.pmf[k];
        cdf[k] = cum;
      }
      cdf.back() = 1.0;
      return OffspringSampler(std::move(cdf));
    }
  }
  throw std::logic_error("unreachable");
}

std::uint64_t OffspringLaw::sample(double x, double capacity, double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("u must lie in [0, 1]");
  return make_sampler(x, capacity)(u);
}

double OffspringLaw::pgf_limit(double s) const {
  switch (family_) {
    case LawFamily::BinarySplit:
      return (1.0 - p0_) * s + p0_ * s * s;
    case LawFamily::BevertonHoltPoisson:
      return std::exp(a_ * (s - 1.0));
    case LawFamily::UserTabulated: {
      const auto& knot = knots_.front();
      double acc = 0.0;
      for (std::size_t k = knot.pmf.size(); k-- > 0;) acc = acc * s + knot.pmf[k];
      return acc;
    }
  }
  return 0.0;
}

std::optional<std::uint64_t> OffspringLaw::support_max() const {
  switch (family_) {
    case LawFamily::BinarySplit:
      return 2;
    case LawFamily::BevertonHoltPoisson:
      return std::nullopt;
    case LawFamily::UserTabulated: {
      std::uint64_t best = 0;
      for (const auto& knot : knots_)
        for (std::size_t k = 0; k < knot.pmf.size(); ++k)
          if (knot.pmf[k] > 0.0) best = std::max<std::uint64_t>(best, k);
      return best;
    }
  }
  return std::nullopt;
}

nlohmann::json OffspringLaw::to_json() const {
  nlohmann::json j;
  j["family"] = to_string(family_);
  switch (family_) {
    case LawFamily::BinarySplit:
      j["p0"] = p0_;
      j["beta"] = beta_;
      j["kappa"] = kappa_;
      break;
    case LawFamily::BevertonHoltPoisson:
      j["a"] = a_;
      j["b"] = b_;
      j["kappa"] = kappa_;
      break;
    case LawFamily::UserTabulated: {
      nlohmann::json knots = nlohmann::json::array();
      for (const auto& knot : knots_)
        knots.push_back({{"x", knot.x}, {"pmf", knot.pmf}});
      j["knots"] = std::move(knots);
      break;
    }
  }
  return j;
}

OffspringLaw OffspringLaw::from_json(const nlohmann::json& j) {
  const std::string family = j.at("family").get<std::string>();
  if (family == "binary_split") {
    return binary_split(j.at("p0").get<double>(), j.at("beta").get<double>(),
                        j.value("kappa", 0.0));
  }
  if (family == "beverton_holt_poisson") {
    return beverton_holt_poisson(j.at("a").get<double>(), j.at("b").get<double>(),
                                 j.value("kappa", 0.0));
  }
  if (family == "user_tabulated") {
    std::vector<TabulatedKnot> knots;
    for (const auto& jk : j.at("knots")) {
      TabulatedKnot knot;
      knot.x = jk.at("x").get<double>();
      knot.pmf = jk.at("pmf").get<std::vector<double>>();
      knots.push_back(std::move(knot));
    }
    return user_tabulated(std::move(knots));
  }
  throw std::invalid_argument("unknown law family: " + family);
}

}  // namespace branchcap
