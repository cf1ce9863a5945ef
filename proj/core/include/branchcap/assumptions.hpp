// Grid-based numerical validation of the structural requirements an
// offspring law must satisfy: stochastic ordering in density and capacity
// (A0), smoothness and uniform convergence of the mean (A1), strict
// increase of f(x) = x m(x) (A2), a uniform variance bound (A4), and the
// 1/sqrt(K) finite-size rates (A5).

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "branchcap/laws.hpp"

namespace branchcap {

enum class AssumptionStatus { VerifiedOnGrid, Violated, NotCheckable };

std::string to_string(AssumptionStatus s);

struct AssumptionResult {
  std::string id;      // "A0", "A1-derivative", "A1-convergence", ...
  AssumptionStatus status = AssumptionStatus::NotCheckable;
  std::string detail;  // measured constants or the reason a check is moot
  std::optional<double> witness_x;
  std::optional<double> witness_capacity;
  std::map<std::string, double> measured;

  bool ok() const { return status != AssumptionStatus::Violated; }
};

struct AssumptionReport {
  std::vector<AssumptionResult> results;
  std::vector<double> x_grid;
  std::vector<double> capacity_grid;

  bool all_verified() const;
  const AssumptionResult& find(const std::string& id) const;
  nlohmann::json to_json() const;
};

// Default grids: x on [0, 2 x*] with 201 points (x* the positive fixed
// point of f, else [0, 2]); K over six log-spaced decades 1e2..1e7.
std::vector<double> default_density_grid(const OffspringLaw& law);
std::vector<double> default_capacity_grid();

// Never throws on violations; every failed check is reported with a witness
// point instead.
AssumptionReport validate_assumptions(const OffspringLaw& law,
                                      std::span<const double> x_grid,
                                      std::span<const double> capacity_grid);

}  // namespace branchcap
