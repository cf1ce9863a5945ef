// Deterministic-map layer: the limiting density map f(x) = x m(x), its
// capacity-K version f^K(x) = x m^K(x), their iterates, the Schroeder limit
// h(x) = lim_n f_n(x / a^n), and fixed-point analysis.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "branchcap/laws.hpp"

namespace branchcap {

class IteratedMap {
 public:
  explicit IteratedMap(OffspringLaw law) : law_(std::move(law)) {}

  double limit(double x) const { return x * law_.mean(x); }
  double at_capacity(double x, double capacity) const {
    return x * law_.mean(x, capacity);
  }

  double iterate_limit(double x0, std::uint64_t n) const;
  double iterate_at_capacity(double x0, std::uint64_t n, double capacity) const;

  double malthusian() const { return law_.malthusian(); }
  const OffspringLaw& law() const { return law_; }

 private:
  OffspringLaw law_;
};

// Tabulated Schroeder limit function with monotone piecewise-cubic
// interpolation between knots.  Strictly increasing with h(0) = 0; queries
// beyond the table range are errors, not extrapolations.
class SchroederH {
 public:
  SchroederH(std::vector<double> knots, std::vector<double> values,
             std::uint64_t truncation_level, double achieved_gap, double malthusian,
             double tol);

  double operator()(double x) const;   // throws std::out_of_range beyond x_max
  double inverse(double y) const;      // monotone bisection to the table tol

  double x_max() const { return knots_.back(); }
  double value_max() const { return values_.back(); }
  std::size_t knot_count() const { return knots_.size(); }
  std::uint64_t truncation_level() const { return truncation_level_; }
  double achieved_gap() const { return achieved_gap_; }
  double malthusian() const { return malthusian_; }
  double tol() const { return tol_; }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }

  // CSV table (x,h) plus a JSON sidecar carrying the build parameters.
  void write_csv(std::ostream& out) const;
  nlohmann::json sidecar(const OffspringLaw& law) const;
  static SchroederH from_csv(std::istream& csv, const nlohmann::json& sidecar);

 private:
  std::vector<double> knots_, values_, slopes_;
  std::uint64_t truncation_level_ = 0;
  double achieved_gap_ = 0.0;
  double malthusian_ = 0.0;
  double tol_ = 0.0;

  void build_slopes();
  std::size_t interval_of(double x) const;
};

// Tabulates h_n(x) = f_n(x / a^n) on a uniform grid until the successive
// sup-difference falls below tol.  The iterates must be non-increasing in n
// at every knot (they are whenever m is non-increasing with m(0) > 1);
// violations beyond floating-point slack throw std::runtime_error, as does
// failure to converge within the iteration cap.
SchroederH compute_h(const IteratedMap& map, double x_max, std::size_t knots,
                     double tol);

inline constexpr std::uint64_t kSchroederIterationCap = 200;
inline constexpr std::size_t kDefaultSchroederKnots = 1025;
inline constexpr double kDefaultSchroederTol = 1e-8;

enum class Stability { Attracting, Repelling, Neutral };

std::string to_string(Stability s);

struct FixedPoint {
  double x = 0.0;
  double derivative = 0.0;  // f'(x*) by central difference
  Stability stability = Stability::Neutral;
};

// Positive roots of f(x) = x on (lo, hi] by bracketing and bisection; the
// trivial root at 0 is excluded.  No sign change found -> empty list.
std::vector<FixedPoint> fixed_points(const IteratedMap& map, double lo, double hi);

// a x* / (or nullopt when the map has no positive fixed point below `hi`).
std::optional<double> default_h_range(const IteratedMap& map, double hi = 1e6);

// Constants of the strict-increase argument near the origin, fitted from m:
// C = 2 sup |m'| over (0, x_probe], slope_floor_domain = min(a/C, 1/C).
struct SlopeFloorFit {
  double C = 0.0;
  double epsilon = 0.0;       // a / C
  double domain_end = 0.0;    // min(epsilon, 1/C), clipped to the table
};
SlopeFloorFit fit_slope_floor(const IteratedMap& map, double x_probe);

}  // namespace branchcap
