// Run configuration: a single JSON document describing the law, the
// simulation parameters, and the selected experiment.  Parsing is strict --
// unknown keys are hard errors -- and every default is materialized, so the
// emitted echo pins down the run completely.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "branchcap/laws.hpp"
#include "branchcap/simulate.hpp"

namespace branchcap {

struct SimulateSection {
  std::uint64_t replicates = 1;

  bool operator==(const SimulateSection&) const = default;
};

struct HSection {
  std::optional<double> x_max;  // defaults to a x* when the map has one
  std::uint64_t knots = 1025;
  double tol = 1e-8;

  bool operator==(const HSection&) const = default;
};

struct WSection {
  std::uint64_t truncation = 30;
  std::uint64_t replicates = 10000;

  bool operator==(const WSection&) const = default;
};

struct ExperimentSection {
  std::string id = "verify_main";
  std::vector<double> capacity_grid = {1e4, 1e5, 1e6};
  std::uint64_t replicates = 2000;
  double x0 = 0.1;                          // verify_fixed_time
  std::uint64_t n = 3;                      // verify_fixed_time
  std::vector<std::int64_t> shifts = {1, 3, 5};  // verify_corollary_shift
  std::string lambda = "sqrt-log";          // verify_sublog
  std::int64_t lambda_constant = 0;

  bool operator==(const ExperimentSection&) const = default;
};

struct RecoverSection {
  std::string mode = "interval";
  std::string observations;  // CSV path (replicate,value)
  std::uint64_t candidate_max = 64;
  double envelope_level = 0.05;
  std::uint64_t meta_replicates = 200;
  std::optional<std::string> h_table;    // reuse a stored table
  std::optional<std::string> h_sidecar;

  bool operator==(const RecoverSection&) const = default;
};

struct AssumptionsSection {
  std::optional<double> x_max;
  std::uint64_t x_points = 201;
  std::vector<double> capacity_grid = {1e2, 1e3, 1e4, 1e5, 1e6, 1e7};

  bool operator==(const AssumptionsSection&) const = default;
};

struct RunConfig {
  OffspringLaw law = OffspringLaw::binary_split(1.0, 1.0);
  SimConfig sim;
  SimulateSection simulate;
  HSection h;
  WSection w;
  ExperimentSection experiment;
  RecoverSection recover;
  AssumptionsSection assumptions;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool quiet = false;

  bool operator==(const RunConfig&) const = default;
};

// Throws std::invalid_argument with a field-precise message on unknown keys
// or violated constraints.
RunConfig parse_config(const std::string& text);

// Fully materialized echo; emit(parse(doc)) parses back to an equal config.
nlohmann::json emit_config(const RunConfig& cfg);
std::string emit_config_text(const RunConfig& cfg);

}  // namespace branchcap
