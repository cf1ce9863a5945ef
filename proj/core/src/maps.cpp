#include "branchcap/maps.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "branchcap/csv.hpp"

namespace branchcap {

namespace {
// Relative slack distinguishing a genuine monotonicity violation from
// floating-point noise in the iterate sequence.
constexpr double kMonotoneSlack = 1e-13;
}  // namespace

double IteratedMap::iterate_limit(double x0, std::uint64_t n) const {
  double x = x0;
  for (std::uint64_t i = 0; i < n; ++i) x = limit(x);
  return x;
}

double IteratedMap::iterate_at_capacity(double x0, std::uint64_t n, double capacity) const {
  double x = x0;
  for (std::uint64_t i = 0; i < n; ++i) x = at_capacity(x, capacity);
  return x;
}

// ---- SchroederH ------------------------------------------------------

SchroederH::SchroederH(std::vector<double> knots, std::vector<double> values,
                       std::uint64_t truncation_level, double achieved_gap,
                       double malthusian, double tol)
    : knots_(std::move(knots)),
      values_(std::move(values)),
      truncation_level_(truncation_level),
      achieved_gap_(achieved_gap),
      malthusian_(malthusian),
      tol_(tol) {
  if (knots_.size() != values_.size() || knots_.size() < 2)
    throw std::invalid_argument("SchroederH: need matching knot/value arrays");
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i] > knots_[i - 1]))
      throw std::invalid_argument("SchroederH: knots must strictly increase");
    if (!(values_[i] > values_[i - 1]))
      throw std::invalid_argument("SchroederH: values must strictly increase");
  }
  if (knots_.front() != 0.0 || values_.front() != 0.0)
    throw std::invalid_argument("SchroederH: table must start at h(0) = 0");
  build_slopes();
}

// Shape-preserving cubic slopes: centered (weighted three-point) estimates
// limited Fritsch-Carlson style.  On smooth strictly monotone data the
// limiter never binds, so the interpolant keeps near-quartic accuracy.
void SchroederH::build_slopes() {
  const std::size_t n = knots_.size();
  std::vector<double> d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i)
    d[i] = (values_[i + 1] - values_[i]) / (knots_[i + 1] - knots_[i]);
  slopes_.assign(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double hl = knots_[i] - knots_[i - 1];
    const double hr = knots_[i + 1] - knots_[i];
    slopes_[i] = (hr * d[i - 1] + hl * d[i]) / (hl + hr);
  }
  // second-order one-sided estimates at the ends, clipped to the secants
  slopes_[0] = std::max(0.0, 2.0 * d[0] - slopes_[1]);
  slopes_[n - 1] = std::max(0.0, 2.0 * d[n - 2] - slopes_[n - 2]);
  if (slopes_[0] > 3.0 * d[0]) slopes_[0] = 3.0 * d[0];
  if (slopes_[n - 1] > 3.0 * d[n - 2]) slopes_[n - 1] = 3.0 * d[n - 2];
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (d[i] <= 0.0) {
      slopes_[i] = slopes_[i + 1] = 0.0;
      continue;
    }
    const double alpha = slopes_[i] / d[i];
    const double beta = slopes_[i + 1] / d[i];
    const double r2 = alpha * alpha + beta * beta;
    if (r2 > 9.0) {
      const double tau = 3.0 / std::sqrt(r2);
      slopes_[i] = tau * alpha * d[i];
      slopes_[i + 1] = tau * beta * d[i];
    }
  }
}

std::size_t SchroederH::interval_of(double x) const {
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  std::size_t i = static_cast<std::size_t>(it - knots_.begin());
  if (i == 0) return 0;
  if (i >= knots_.size()) return knots_.size() - 2;
  return i - 1;
}

double SchroederH::operator()(double x) const {
  if (!(x >= 0.0) || x > knots_.back() * (1.0 + 1e-12))
    throw std::out_of_range("SchroederH: query outside table range");
  x = std::min(x, knots_.back());
  const std::size_t i = interval_of(x);
  const double hx = knots_[i + 1] - knots_[i];
  const double t = (x - knots_[i]) / hx;
  const double y0 = values_[i], y1 = values_[i + 1];
  const double m0 = slopes_[i] * hx, m1 = slopes_[i + 1] * hx;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 +
         (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1;
}

double SchroederH::inverse(double y) const {
  if (!(y >= 0.0) || y > values_.back())
    throw std::out_of_range("SchroederH: inverse query outside value range");
  if (y == 0.0) return 0.0;
  auto it = std::lower_bound(values_.begin(), values_.end(), y);
  std::size_t i = static_cast<std::size_t>(it - values_.begin());
  if (i > 0 && values_[i] == y) return knots_[i];
  double lo = knots_[i - 1], hi = knots_[i];
  // Bisection on the monotone interpolant down to the table tolerance.
  while (hi - lo > tol_ * 0.5) {
    const double mid = 0.5 * (lo + hi);
    if ((*this)(mid) < y)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

void SchroederH::write_csv(std::ostream& out) const {
  CsvWriter csv(out, {"x", "h"});
  for (std::size_t i = 0; i < knots_.size(); ++i) csv.row(knots_[i], values_[i]);
}

nlohmann::json SchroederH::sidecar(const OffspringLaw& law) const {
  return {{"schema_version", 1},
          {"law", law.to_json()},
          {"a", malthusian_},
          {"n_trunc", truncation_level_},
          {"achieved_gap", achieved_gap_},
          {"tol", tol_},
          {"knots", knots_.size()},
          {"x_max", knots_.back()}};
}

SchroederH SchroederH::from_csv(std::istream& csv, const nlohmann::json& sidecar) {
  std::string line;
  if (!std::getline(csv, line)) throw std::invalid_argument("h table CSV: empty input");
  std::vector<double> xs, hs;
  while (std::getline(csv, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    if (!std::getline(row, cell, ',')) break;
    xs.push_back(std::stod(cell));
    if (!std::getline(row, cell, ',')) throw std::invalid_argument("h table CSV: bad row");
    hs.push_back(std::stod(cell));
  }
  return SchroederH(std::move(xs), std::move(hs),
                    sidecar.at("n_trunc").get<std::uint64_t>(),
                    sidecar.at("achieved_gap").get<double>(),
                    sidecar.at("a").get<double>(), sidecar.at("tol").get<double>());
}

// ---- compute_h -------------------------------------------------------

SchroederH compute_h(const IteratedMap& map, double x_max, std::size_t knots,
                     double tol) {
  if (!(x_max > 0.0)) throw std::invalid_argument("compute_h: x_max must be > 0");
  if (knots < 3) throw std::invalid_argument("compute_h: need at least 3 knots");
  if (!(tol > 0.0)) throw std::invalid_argument("compute_h: tol must be > 0");
  const double a = map.malthusian();
  if (!(a > 1.0)) throw std::invalid_argument("compute_h: law must be supercritical");

  std::vector<double> grid(knots);
  for (std::size_t i = 0; i < knots; ++i)
    grid[i] = x_max * static_cast<double>(i) / static_cast<double>(knots - 1);

  // h_n(x) = f_n(x / a^n), recomputed from scratch per n (the argument
  // changes with n).  Stops at the first n with sup |h_n - h_{n-1}| < tol.
  std::vector<double> prev(knots), cur(knots);
  double scale = 1.0;
  for (std::size_t i = 0; i < knots; ++i) prev[i] = grid[i];  // h_0 = id

  std::uint64_t level = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (std::uint64_t n = 1; n <= kSchroederIterationCap; ++n) {
    scale /= a;
    gap = 0.0;
    for (std::size_t i = 0; i < knots; ++i) {
      cur[i] = map.iterate_limit(grid[i] * scale, n);
      const double slack = kMonotoneSlack * std::max(1.0, prev[i]);
      if (cur[i] > prev[i] + slack) {
        std::ostringstream msg;
        msg << "compute_h: iterate increased at x = " << grid[i] << " (n = " << n
            << "); the supplied map does not satisfy the monotone-mean "
               "requirements";
        throw std::runtime_error(msg.str());
      }
      gap = std::max(gap, prev[i] - cur[i]);
    }
    std::swap(prev, cur);
    if (gap < tol) {
      level = n;
      break;
    }
  }
  if (level == 0)
    throw std::runtime_error("compute_h: did not converge within the iteration cap");

  // Pin the exact endpoint: h(0) = f_n(0) = 0.
  prev[0] = 0.0;
  return SchroederH(std::move(grid), std::move(prev), level, gap, a, tol);
}

// ---- fixed points ----------------------------------------------------

std::string to_string(Stability s) {
  switch (s) {
    case Stability::Attracting: return "attracting";
    case Stability::Repelling: return "repelling";
    case Stability::Neutral: return "neutral";
  }
  return "unknown";
}

std::vector<FixedPoint> fixed_points(const IteratedMap& map, double lo, double hi) {
  if (!(hi > lo) || !(lo >= 0.0))
    throw std::invalid_argument("fixed_points: need 0 <= lo < hi");
  const int kCells = 2048;
  std::vector<FixedPoint> roots;
  auto g = [&](double x) { return map.limit(x) - x; };
  // Skip the trivial root at 0 by starting strictly inside.
  const double start = std::max(lo, hi * 1e-9);
  double x0 = start;
  double g0 = g(x0);
  for (int i = 1; i <= kCells; ++i) {
    const double x1 = start + (hi - start) * i / kCells;
    const double g1 = g(x1);
    if (g0 * g1 < 0.0) {
      double a = x0, b = x1;
      for (int it = 0; it < 200 && (b - a) > 1e-14 * std::max(1.0, b); ++it) {
        const double mid = 0.5 * (a + b);
        if (g(a) * g(mid) <= 0.0)
          b = mid;
        else
          a = mid;
      }
      FixedPoint fp;
      fp.x = 0.5 * (a + b);
      const double step = std::max(1e-6, fp.x * 1e-6);
      fp.derivative = (map.limit(fp.x + step) - map.limit(fp.x - step)) / (2 * step);
      const double mag = std::abs(fp.derivative);
      fp.stability = mag < 1.0 - 1e-9   ? Stability::Attracting
                     : mag > 1.0 + 1e-9 ? Stability::Repelling
                                        : Stability::Neutral;
      roots.push_back(fp);
    }
    x0 = x1;
    g0 = g1;
  }
  return roots;
}

std::optional<double> default_h_range(const IteratedMap& map, double hi) {
  const auto roots = fixed_points(map, 0.0, hi);
  if (roots.empty()) return std::nullopt;
  return map.malthusian() * roots.front().x;
}

SlopeFloorFit fit_slope_floor(const IteratedMap& map, double x_probe) {
  if (!(x_probe > 0.0)) throw std::invalid_argument("fit_slope_floor: x_probe must be > 0");
  const auto& law = map.law();
  const int kProbe = 4096;
  const double step = x_probe / kProbe;
  double sup = 0.0;
  // sup |m'(u)| over (0, x_probe] by central differences.
  for (int i = 1; i <= kProbe; ++i) {
    const double u = i * step;
    const double lo = std::max(0.0, u - 0.5 * step);
    const double dm = (law.mean(u + 0.5 * step) - law.mean(lo)) / (u + 0.5 * step - lo);
    sup = std::max(sup, std::abs(dm));
  }
  SlopeFloorFit fit;
  fit.C = 2.0 * sup;
  const double a = map.malthusian();
  if (fit.C <= 0.0) {
    // Constant mean: the increase argument holds on the whole probe range.
    fit.epsilon = x_probe;
    fit.domain_end = x_probe;
  } else {
    fit.epsilon = a / fit.C;
    fit.domain_end = std::min(fit.epsilon, 1.0 / fit.C);
  }
  return fit;
}

}  // namespace branchcap
