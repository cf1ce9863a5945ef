#include "branchcap/assumptions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "branchcap/maps.hpp"

namespace branchcap {

namespace {

// Dominance is probed on a fixed quantile grid; the quantile functions of
// the shipped families are step functions, so any interior grid works.
std::vector<double> quantile_grid() {
  std::vector<double> u;
  for (int i = 1; i < 200; ++i) u.push_back(i / 200.0);
  return u;
}

AssumptionResult verified(std::string id, std::string detail,
                          std::map<std::string, double> measured = {}) {
  AssumptionResult r;
  r.id = std::move(id);
  r.status = AssumptionStatus::VerifiedOnGrid;
  r.detail = std::move(detail);
  r.measured = std::move(measured);
  return r;
}

AssumptionResult violated(std::string id, std::string detail, double wx,
                          std::optional<double> wk = std::nullopt) {
  AssumptionResult r;
  r.id = std::move(id);
  r.status = AssumptionStatus::Violated;
  r.detail = std::move(detail);
  r.witness_x = wx;
  r.witness_capacity = wk;
  return r;
}

AssumptionResult not_checkable(std::string id, std::string reason) {
  AssumptionResult r;
  r.id = std::move(id);
  r.status = AssumptionStatus::NotCheckable;
  r.detail = std::move(reason);
  return r;
}

// Least-squares slope of log(gap) against log(K), used for the O(1/sqrt K)
// rate checks; gaps below the noise floor are dropped.
std::optional<double> loglog_slope(std::span<const double> capacities,
                                   std::span<const double> gaps) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    if (gaps[i] > 1e-14) {
      lx.push_back(std::log(capacities[i]));
      ly.push_back(std::log(gaps[i]));
    }
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / denom;
}

}  // namespace

std::string to_string(AssumptionStatus s) {
  switch (s) {
    case AssumptionStatus::VerifiedOnGrid: return "verified-on-grid";
    case AssumptionStatus::Violated: return "violated";
    case AssumptionStatus::NotCheckable: return "not-checkable";
  }
  return "unknown";
}

bool AssumptionReport::all_verified() const {
  for (const auto& r : results)
    if (r.status == AssumptionStatus::Violated) return false;
  return true;
}

const AssumptionResult& AssumptionReport::find(const std::string& id) const {
  for (const auto& r : results)
    if (r.id == id) return r;
  throw std::out_of_range("no assumption result with id " + id);
}

nlohmann::json AssumptionReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["x_grid"] = x_grid;
  j["capacity_grid"] = capacity_grid;
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json jr;
    jr["id"] = r.id;
    jr["status"] = to_string(r.status);
    jr["detail"] = r.detail;
    if (r.witness_x) jr["witness_x"] = *r.witness_x;
    if (r.witness_capacity) jr["witness_capacity"] = *r.witness_capacity;
    jr["measured"] = r.measured;
    rs.push_back(std::move(jr));
  }
  j["results"] = std::move(rs);
  j["all_verified"] = all_verified();
  return j;
}

std::vector<double> default_density_grid(const OffspringLaw& law) {
  double hi = 2.0;
  try {
    IteratedMap map(law);
    if (auto range = default_h_range(map)) hi = 2.0 * (*range) / law.malthusian();
  } catch (const std::exception&) {
    // keep the fallback range
  }
  std::vector<double> grid(201);
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = hi * static_cast<double>(i) / static_cast<double>(grid.size() - 1);
  return grid;
}

std::vector<double> default_capacity_grid() {
  return {1e2, 1e3, 1e4, 1e5, 1e6, 1e7};
}

AssumptionReport validate_assumptions(const OffspringLaw& law,
                                      std::span<const double> x_grid,
                                      std::span<const double> capacity_grid) {
  if (x_grid.empty() || capacity_grid.empty())
    throw std::invalid_argument("validate_assumptions: grids must be non-empty");
  if (!std::is_sorted(x_grid.begin(), x_grid.end()) ||
      !std::is_sorted(capacity_grid.begin(), capacity_grid.end()))
    throw std::invalid_argument("validate_assumptions: grids must be sorted");

  AssumptionReport report;
  report.x_grid.assign(x_grid.begin(), x_grid.end());
  report.capacity_grid.assign(capacity_grid.begin(), capacity_grid.end());

  const double a = law.malthusian();
  const auto us = quantile_grid();

  // -- A0: monotone means and first-order stochastic dominance ----------
  {
    bool ok = true;
    AssumptionResult res;
    // m^K non-increasing in x (including the limit), non-decreasing in K.
    for (double K : capacity_grid) {
      for (std::size_t i = 1; i < x_grid.size() && ok; ++i) {
        if (law.mean(x_grid[i], K) > law.mean(x_grid[i - 1], K) + 1e-12) {
          res = violated("A0", "m^K increases in x", x_grid[i], K);
          ok = false;
        }
      }
      if (!ok) break;
    }
    if (ok) {
      for (double x : x_grid) {
        double prev = -std::numeric_limits<double>::infinity();
        for (double K : capacity_grid) {
          const double m = law.mean(x, K);
          if (m < prev - 1e-12) {
            res = violated("A0", "m^K decreases in K", x, K);
            ok = false;
            break;
          }
          prev = m;
        }
        if (ok && law.mean(x) < prev - 1e-12) {
          res = violated("A0", "limit mean lies below m^K", x);
          ok = false;
        }
        if (!ok) break;
      }
    }
    // Quantile-function ordering: higher density -> stochastically smaller,
    // higher capacity -> stochastically larger (toward the limit law).
    if (ok) {
      for (double K : capacity_grid) {
        for (std::size_t i = 1; i < x_grid.size() && ok; ++i) {
          const auto lo = law.make_sampler(x_grid[i - 1], K);
          const auto hi = law.make_sampler(x_grid[i], K);
          for (double u : us) {
            if (hi(u) > lo(u)) {
              res = violated("A0", "quantile ordering in x fails", x_grid[i], K);
              ok = false;
              break;
            }
          }
        }
        if (!ok) break;
      }
    }
    if (ok) {
      for (double x : x_grid) {
        const auto limit = law.make_sampler(x, kInfiniteCapacity);
        std::optional<OffspringSampler> prev;
        for (double K : capacity_grid) {
          auto cur = law.make_sampler(x, K);
          if (prev) {
            for (double u : us) {
              if (cur(u) < (*prev)(u)) {
                res = violated("A0", "quantile ordering in K fails", x, K);
                ok = false;
                break;
              }
            }
          }
          if (!ok) break;
          prev.emplace(std::move(cur));
        }
        if (ok && prev) {
          for (double u : us) {
            if ((*prev)(u) > limit(u)) {
              res = violated("A0", "finite-K law exceeds the limit law", x,
                             capacity_grid.back());
              ok = false;
              break;
            }
          }
        }
        if (!ok) break;
      }
    }
    if (ok) res = verified("A0", "means monotone and quantile dominance holds on grid");
    report.results.push_back(std::move(res));
  }

  // -- A1, first reading: m' uniformly continuous near the origin -------
  {
    if (!(a > 1.0)) {
      report.results.push_back(
          violated("A1-derivative", "m(0) <= 1: not supercritical", 0.0));
    } else if (law.family() == LawFamily::UserTabulated) {
      report.results.push_back(not_checkable(
          "A1-derivative",
          "tabulated mean is piecewise constant; derivative continuity is moot"));
    } else {
      // Modulus of continuity of the finite-difference derivative near 0.
      const double hi = std::max(x_grid.front(), x_grid.back() / 4.0);
      const int probes = 128;
      const double step = hi / probes;
      double max_jump = 0.0;
      double prev_d = std::numeric_limits<double>::quiet_NaN();
      for (int i = 0; i < probes; ++i) {
        const double x = step * (i + 0.5);
        const double d = (law.mean(x + 0.5 * step) - law.mean(std::max(0.0, x - 0.5 * step))) / step;
        if (i > 0) max_jump = std::max(max_jump, std::abs(d - prev_d));
        prev_d = d;
      }
      std::ostringstream detail;
      detail << "max |m'| jump over successive probes near 0: " << max_jump;
      report.results.push_back(verified("A1-derivative", detail.str(),
                                        {{"max_derivative_jump", max_jump},
                                         {"a", a}}));
    }
  }

  // -- A1, second reading: uniform convergence of m^K with a Cx bound ---
  {
    bool ok = true;
    AssumptionResult res;
    std::vector<double> sup_gaps;
    for (double K : capacity_grid) {
      double sup_gap = 0.0;
      for (double x : x_grid) {
        const double gap = law.mean(x) - law.mean(x, K);
        if (gap < -1e-12) {
          res = violated("A1-convergence", "m^K exceeds the limit mean", x, K);
          ok = false;
          break;
        }
        sup_gap = std::max(sup_gap, gap);
      }
      if (!ok) break;
      sup_gaps.push_back(sup_gap);
    }
    if (ok) {
      for (std::size_t i = 1; i < sup_gaps.size(); ++i) {
        if (sup_gaps[i] > sup_gaps[i - 1] + 1e-12) {
          res = violated("A1-convergence", "sup gap fails to shrink with K",
                         x_grid.back(), capacity_grid[i]);
          ok = false;
          break;
        }
      }
    }
    if (ok) {
      // Density-dependent part of the gap is Lipschitz-bounded near 0.
      double fitted_c = 0.0;
      for (double K : capacity_grid) {
        const double gap0 = law.mean(0.0) - law.mean(0.0, K);
        for (double x : x_grid) {
          if (x <= 0.0) continue;
          const double gap = law.mean(x) - law.mean(x, K);
          fitted_c = std::max(fitted_c, (gap - gap0) / x);
        }
      }
      std::ostringstream detail;
      detail << "sup gap at largest K: " << sup_gaps.back()
             << "; fitted C for the Cx bound: " << fitted_c;
      res = verified("A1-convergence", detail.str(),
                     {{"sup_gap_final", sup_gaps.back()}, {"fitted_C", fitted_c}});
    }
    report.results.push_back(std::move(res));
  }

  // -- A2: f strictly increasing ----------------------------------------
  {
    bool ok = true;
    AssumptionResult res;
    double prev = x_grid.front() * law.mean(x_grid.front());
    for (std::size_t i = 1; i < x_grid.size(); ++i) {
      const double fi = x_grid[i] * law.mean(x_grid[i]);
      if (!(fi > prev)) {
        res = violated("A2", "f(x) = x m(x) fails to increase strictly", x_grid[i]);
        ok = false;
        break;
      }
      prev = fi;
    }
    if (ok) res = verified("A2", "f strictly increasing on grid");
    report.results.push_back(std::move(res));
  }

  // -- A4: uniformly bounded variance, uniform convergence --------------
  {
    bool ok = true;
    AssumptionResult res;
    double bound = 0.0;
    for (double K : capacity_grid) {
      for (double x : x_grid) {
        const double v = law.variance(x, K);
        if (!std::isfinite(v) || v < 0.0) {
          res = violated("A4", "variance not finite/non-negative", x, K);
          ok = false;
          break;
        }
        bound = std::max(bound, v);
      }
      if (!ok) break;
    }
    if (ok) {
      double sup_dev = 0.0;
      for (double x : x_grid) {
        bound = std::max(bound, law.variance(x));
        sup_dev = std::max(
            sup_dev, std::abs(law.variance(x, capacity_grid.back()) - law.variance(x)));
      }
      std::ostringstream detail;
      detail << "variance bound on grid: " << bound
             << "; sup |sigma_K^2 - sigma^2| at largest K: " << sup_dev;
      res = verified("A4", detail.str(),
                     {{"variance_bound", bound}, {"sup_deviation_final", sup_dev}});
    }
    report.results.push_back(std::move(res));
  }

  // -- A5: expansion near 0 and the 1/sqrt(K) rates ---------------------
  {
    bool ok = true;
    AssumptionResult res;
    std::vector<double> caps(capacity_grid.begin(), capacity_grid.end());
    std::vector<double> mean_gaps, sup_f_gaps;
    for (double K : capacity_grid) {
      if (law.mean(0.0, K) > a + 1e-12) {
        res = violated("A5", "m^K(0) exceeds a", 0.0, K);
        ok = false;
        break;
      }
      mean_gaps.push_back(std::max(0.0, a - law.mean(0.0, K)));
      double sup_f = 0.0;
      for (double x : x_grid)
        sup_f = std::max(sup_f, std::abs(x * law.mean(x, K) - x * law.mean(x)));
      sup_f_gaps.push_back(sup_f);
    }
    if (ok) {
      std::map<std::string, double> measured;
      std::ostringstream detail;
      // Local slope of m^K below the origin value (the -Cx term).
      double slope_c = 0.0;
      for (double K : capacity_grid) {
        const double m0 = law.mean(0.0, K);
        for (double x : x_grid) {
          if (x <= 0.0) continue;
          slope_c = std::max(slope_c, (m0 - law.mean(x, K)) / x);
        }
      }
      measured["fitted_C_local"] = slope_c;

      const double max_mean_gap = *std::max_element(mean_gaps.begin(), mean_gaps.end());
      if (max_mean_gap <= 1e-14) {
        detail << "a - m^K(0) identically 0 (capacity-free mean); ";
        measured["mean_gap_rate"] = 0.0;
      } else {
        const auto slope = loglog_slope(caps, mean_gaps);
        if (slope && std::abs(*slope + 0.5) > 0.15) {
          res = violated("A5", "a - m^K(0) decays slower than 1/sqrt(K)", 0.0,
                         capacity_grid.back());
          ok = false;
        } else if (slope) {
          detail << "a - m^K(0) log-log slope " << *slope << "; ";
          measured["mean_gap_rate"] = *slope;
          double c_rate = 0.0;
          for (std::size_t i = 0; i < caps.size(); ++i)
            c_rate = std::max(c_rate, mean_gaps[i] * std::sqrt(caps[i]));
          measured["mean_gap_constant"] = c_rate;
        }
      }
      if (ok) {
        const double max_f_gap = *std::max_element(sup_f_gaps.begin(), sup_f_gaps.end());
        if (max_f_gap <= 1e-14) {
          detail << "sup |f^K - f| identically 0 on grid";
          measured["f_gap_rate"] = 0.0;
        } else {
          const auto slope = loglog_slope(caps, sup_f_gaps);
          if (slope && std::abs(*slope + 0.5) > 0.15) {
            res = violated("A5", "sup |f^K - f| decays slower than 1/sqrt(K)",
                           x_grid.back(), capacity_grid.back());
            ok = false;
          } else if (slope) {
            detail << "sup |f^K - f| log-log slope " << *slope;
            measured["f_gap_rate"] = *slope;
            double c_rate = 0.0;
            for (std::size_t i = 0; i < caps.size(); ++i)
              c_rate = std::max(c_rate, sup_f_gaps[i] * std::sqrt(caps[i]));
            measured["f_gap_constant"] = c_rate;
          }
        }
      }
      if (ok) res = verified("A5", detail.str(), std::move(measured));
    }
    report.results.push_back(std::move(res));
  }

  return report;
}

}  // namespace branchcap
