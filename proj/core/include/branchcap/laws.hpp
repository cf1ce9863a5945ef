// Offspring-law families: the conditional reproduction of one individual
// given the current population density x and the carrying capacity K.
//
// Two parametric families ship with the library:
//   BinarySplit         xi in {1,2},  P(xi = 2 | x) = p0 / (1 + beta x)
//   BevertonHoltPoisson xi | x ~ Poisson(a / (1 + b x))
// plus UserTabulated laws given as an explicit pmf per density knot.
//
// The finite-size knob kappa depresses the mean-defining parameter by the
// factor (1 - kappa / sqrt(K)); kappa = 0 makes the law capacity-free.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace branchcap {

inline constexpr double kInfiniteCapacity = std::numeric_limits<double>::infinity();

enum class LawFamily { BinarySplit, BevertonHoltPoisson, UserTabulated };

std::string to_string(LawFamily family);

struct TabulatedKnot {
  double x = 0.0;               // density knot
  std::vector<double> pmf;      // pmf[k] = P(xi = k), k = 0..pmf.size()-1

  bool operator==(const TabulatedKnot&) const = default;
};

// Precomputed inverse CDF of the conditional law at one (x, K); cheap to
// query per individual inside simulation loops.
class OffspringSampler {
 public:
  explicit OffspringSampler(std::vector<double> cdf);

  // Generalized inverse CDF: smallest k with F(k) >= u and F(k) > 0.
  std::uint64_t operator()(double u) const;

  const std::vector<double>& cdf() const { return cdf_; }

 private:
  std::vector<double> cdf_;
};

class OffspringLaw {
 public:
  static OffspringLaw binary_split(double p0, double beta, double kappa = 0.0);
  static OffspringLaw beverton_holt_poisson(double a, double b, double kappa = 0.0);
  static OffspringLaw user_tabulated(std::vector<TabulatedKnot> knots);
  // CSV rows: x_knot,k,probability (header required); per-knot mass must sum
  // to 1 within 1e-12.
  static OffspringLaw user_tabulated_from_csv(std::istream& in);

  LawFamily family() const { return family_; }

  // a = m(0): mean offspring per individual at zero density (limit law).
  double malthusian() const;

  // m^K(x); pass K = kInfiniteCapacity for the limiting mean m(x).
  double mean(double x, double capacity = kInfiniteCapacity) const;

  // sigma_K^2(x); Poisson laws have variance equal to the mean.
  double variance(double x, double capacity = kInfiniteCapacity) const;

  // One draw through the quantile construction; monotone non-decreasing in
  // u, non-increasing in x, non-decreasing in K.
  std::uint64_t sample(double x, double capacity, double u) const;

  OffspringSampler make_sampler(double x, double capacity) const;

  // E[s^eta] for the limit law (x = 0, K = infinity); extinction oracle.
  double pgf_limit(double s) const;

  // Whether a whole generation can be advanced with O(1) aggregate draws.
  bool supports_aggregate() const { return family_ != LawFamily::UserTabulated; }

  std::optional<std::uint64_t> support_max() const;  // nullopt = unbounded

  double kappa() const { return kappa_; }

  // (1 - kappa/sqrt(K)); throws std::domain_error if the depression would
  // drive the mean parameter negative (kappa > sqrt(K)).
  double mean_factor(double capacity) const;

  nlohmann::json to_json() const;
  static OffspringLaw from_json(const nlohmann::json& j);

  bool operator==(const OffspringLaw&) const = default;

 private:
  OffspringLaw() = default;

  LawFamily family_ = LawFamily::BinarySplit;
  double p0_ = 0.0, beta_ = 0.0;  // BinarySplit
  double a_ = 0.0, b_ = 0.0;      // BevertonHoltPoisson
  double kappa_ = 0.0;
  std::vector<TabulatedKnot> knots_;

  const TabulatedKnot& knot_at_or_above(double x) const;
};

}  // namespace branchcap
