#include "branchcap/run.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "branchcap/assumptions.hpp"
#include "branchcap/csv.hpp"
#include "branchcap/experiments.hpp"
#include "branchcap/indexing.hpp"
#include "branchcap/maps.hpp"
#include "branchcap/rng.hpp"
#include "branchcap/simulate.hpp"
#include "branchcap/wlimit.hpp"

namespace branchcap {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path prepare_out_dir(const RunConfig& cfg) {
  fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("cannot create output directory '" + cfg.out_dir + "'");
  return dir;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << body;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

json meta_header(const std::string& command, const RunConfig& cfg) {
  return {{"schema_version", 1},
          {"command", command},
          {"seed", cfg.seed},
          {"law", cfg.law.to_json()},
          {"config", emit_config(cfg)}};
}

void emit_meta(const fs::path& path, const std::string& command, const RunConfig& cfg,
               RunOutcome& outcome) {
  write_file(path, meta_header(command, cfg).dump(2) + "\n");
  outcome.artifacts.push_back(path.string());
}

// Resolves the h table for a config: an explicit x_max wins, otherwise
// a x* from the positive fixed point.
SchroederH build_h(const RunConfig& cfg) {
  IteratedMap map(cfg.law);
  double x_max;
  if (cfg.h.x_max) {
    x_max = *cfg.h.x_max;
  } else {
    const auto range = default_h_range(map);
    if (!range)
      throw std::invalid_argument(
          "h.x_max is required: the map has no positive fixed point to size "
          "the table from");
    x_max = *range;
  }
  return compute_h(map, x_max, cfg.h.knots, cfg.h.tol);
}

std::vector<double> load_ensemble_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open observations CSV '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("observations CSV '" + path + "' is empty");
  std::vector<double> values;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("observations CSV '" + path + "': malformed row");
    values.push_back(std::stod(line.substr(comma + 1)));
  }
  return values;
}

RunOutcome run_simulate(const RunConfig& cfg) {
  RunOutcome outcome;
  const fs::path dir = prepare_out_dir(cfg);
  std::ostringstream csv_body;
  CsvWriter csv(csv_body, {"replicate", "n", "Z", "X"});
  bool fallback = false;
  for (std::uint64_t r = 0; r < cfg.simulate.replicates; ++r) {
    SimConfig sim = cfg.sim;
    sim.seed = rng::derive_key(cfg.seed, "cli/simulate", r);
    const PopulationPath path = simulate_path(cfg.law, sim);
    fallback = fallback || (sim.mode == SimMode::Fast && path.stats.uniform_draws > 0);
    for (std::size_t n = 0; n < path.counts.size(); ++n)
      csv.row(r, static_cast<std::uint64_t>(n), path.counts[n], path.density(n));
  }
  const fs::path table = dir / "trajectories.csv";
  write_file(table, csv_body.str());
  outcome.artifacts.push_back(table.string());
  emit_meta(dir / "trajectories.meta.json", "simulate", cfg, outcome);
  std::ostringstream sum;
  sum << "simulate: wrote " << cfg.simulate.replicates << " trajectories to "
      << table.string();
  if (fallback)
    sum << "\nnote: law has no aggregate form; fast mode fell back to exact sampling";
  outcome.summary = sum.str();
  return outcome;
}

RunOutcome run_coupled(const RunConfig& cfg) {
  RunOutcome outcome;
  const fs::path dir = prepare_out_dir(cfg);
  std::ostringstream paths_body, summary_body;
  CsvWriter paths_csv(paths_body, {"replicate", "n", "Z", "Z_tilde", "Z_gamma"});
  CsvWriter summary_csv(summary_body, {"replicate", "tau", "nu", "sandwich_ok"});
  std::uint64_t violations = 0;
  for (std::uint64_t r = 0; r < cfg.simulate.replicates; ++r) {
    SimConfig sim = cfg.sim;
    sim.mode = SimMode::Exact;
    sim.seed = rng::derive_key(cfg.seed, "cli/coupled", r);
    const CoupledPaths cp = simulate_coupled(cfg.law, sim);
    const bool ok = cp.sandwich_holds();
    if (!ok) ++violations;
    for (std::size_t n = 0; n < cp.z.counts.size(); ++n)
      paths_csv.row(r, static_cast<std::uint64_t>(n), cp.z.counts[n],
                    cp.z_tilde.counts[n], cp.z_gamma.counts[n]);
    summary_csv.row(r, cp.tau ? static_cast<std::int64_t>(*cp.tau) : -1,
                    cp.nu ? static_cast<std::int64_t>(*cp.nu) : -1,
                    std::string_view(ok ? "true" : "false"));
  }
  const fs::path table = dir / "coupled.csv";
  const fs::path stop = dir / "coupled_summary.csv";
  write_file(table, paths_body.str());
  write_file(stop, summary_body.str());
  outcome.artifacts.push_back(table.string());
  outcome.artifacts.push_back(stop.string());
  emit_meta(dir / "coupled.meta.json", "coupled", cfg, outcome);
  std::ostringstream sum;
  sum << "coupled: " << cfg.simulate.replicates << " runs, " << violations
      << " sandwich violations";
  outcome.summary = sum.str();
  outcome.exit_code = violations == 0 ? 0 : 1;
  return outcome;
}

RunOutcome run_compute_h(const RunConfig& cfg) {
  RunOutcome outcome;
  const fs::path dir = prepare_out_dir(cfg);
  const SchroederH h = build_h(cfg);
  std::ostringstream body;
  h.write_csv(body);
  const fs::path table = dir / "h_table.csv";
  write_file(table, body.str());
  outcome.artifacts.push_back(table.string());

  json sidecar = h.sidecar(cfg.law);
  sidecar["seed"] = cfg.seed;
  sidecar["config"] = emit_config(cfg);
  const fs::path side = dir / "h_table.sidecar.json";
  write_file(side, sidecar.dump(2) + "\n");
  outcome.artifacts.push_back(side.string());

  std::ostringstream sum;
  sum << "compute-h: " << h.knot_count() << " knots on [0, " << h.x_max()
      << "], truncation level " << h.truncation_level() << ", achieved gap "
      << h.achieved_gap();
  outcome.summary = sum.str();
  return outcome;
}

RunOutcome run_sample_w(const RunConfig& cfg) {
  RunOutcome outcome;
  const fs::path dir = prepare_out_dir(cfg);
  const auto w = sample_w(cfg.law, cfg.sim.initial_count, cfg.w.truncation,
                          rng::derive_key(cfg.seed, "cli/sample-w"),
                          cfg.w.replicates, cfg.threads);
  std::ostringstream body;
  CsvWriter csv(body, {"replicate", "value"});
  for (std::size_t r = 0; r < w.values.size(); ++r)
    csv.row(static_cast<std::uint64_t>(r), w.values[r]);
  const fs::path table = dir / "w_samples.csv";
  write_file(table, body.str());
  outcome.artifacts.push_back(table.string());
  emit_meta(dir / "w_samples.meta.json", "sample-w", cfg, outcome);

  const auto moments = w_moments(cfg.law, cfg.sim.initial_count);
  std::ostringstream sum;
  sum << "sample-w: " << w.values.size() << " samples; mean " << w.sample_mean()
      << " (analytic " << moments.mean << "), variance " << w.sample_variance()
      << " (analytic " << moments.variance << ")";
  outcome.summary = sum.str();
  return outcome;
}

RunOutcome run_verify(const RunConfig& cfg) {
  RunOutcome outcome;
  const fs::path dir = prepare_out_dir(cfg);
  const auto& ex = cfg.experiment;
  ExperimentReport report;
  if (ex.id == "verify_theorem1") {
    report = verify_theorem1(cfg.law, cfg.sim.initial_count, cfg.sim.c_exponent,
                             cfg.sim.gamma_exponent, ex.capacity_grid, ex.replicates,
                             cfg.seed, cfg.threads);
  } else if (ex.id == "verify_fixed_time") {
    report = verify_fixed_time(cfg.law, ex.x0, ex.n, ex.capacity_grid, ex.replicates,
                               cfg.seed, cfg.threads);
  } else if (ex.id == "verify_main") {
    EnsembleOptions opts;
    opts.w_truncation = cfg.w.truncation;
    opts.h_knots = cfg.h.knots;
    opts.h_tol = cfg.h.tol;
    report = verify_main(cfg.law, cfg.sim.initial_count, ex.capacity_grid,
                         ex.replicates, cfg.seed, cfg.threads, opts);
  } else if (ex.id == "verify_corollary_shift") {
    EnsembleOptions opts;
    opts.w_truncation = cfg.w.truncation;
    opts.h_knots = cfg.h.knots;
    opts.h_tol = cfg.h.tol;
    report = verify_corollary_shift(cfg.law, cfg.sim.initial_count, ex.shifts,
                                    ex.capacity_grid, ex.replicates, cfg.seed,
                                    cfg.threads, opts);
  } else if (ex.id == "verify_sublog") {
    SublogSpec spec;
    if (ex.lambda == "sqrt-log") spec.kind = SublogSpec::Kind::SqrtLog;
    else if (ex.lambda == "log-log") spec.kind = SublogSpec::Kind::LogLog;
    else if (ex.lambda == "constant") spec.kind = SublogSpec::Kind::Constant;
    else spec.kind = SublogSpec::Kind::Log;
    spec.constant = ex.lambda_constant;
    report = verify_sublog(cfg.law, cfg.sim.initial_count, spec, ex.capacity_grid,
                           ex.replicates, cfg.seed, cfg.threads);
  } else {
    throw std::invalid_argument("unknown experiment id '" + ex.id + "'");
  }

  json jr = report.to_json();
  jr["meta"] = meta_header("verify", cfg);
  const fs::path report_json = dir / (ex.id + ".report.json");
  write_file(report_json, jr.dump(2) + "\n");
  outcome.artifacts.push_back(report_json.string());

  std::ostringstream body;
  report.write_csv(body);
  const fs::path report_csv = dir / (ex.id + ".report.csv");
  write_file(report_csv, body.str());
  outcome.artifacts.push_back(report_csv.string());

  std::ostringstream sum;
  sum << ex.id << ": " << (report.passed() ? "PASS" : "FAIL");
  for (const auto& [name, ok] : report.verdicts)
    sum << "\n  " << (ok ? "pass" : "FAIL") << "  " << name;
  for (const auto& note : report.notes) sum << "\n  note: " << note;
  outcome.summary = sum.str();
  outcome.exit_code = report.passed() ? 0 : 1;
  return outcome;
}

RunOutcome run_recover(const RunConfig& cfg) {
  RunOutcome outcome;
  const fs::path dir = prepare_out_dir(cfg);
  if (cfg.recover.observations.empty())
    throw std::invalid_argument("recover.observations is required");
  const auto obs = load_ensemble_csv(cfg.recover.observations);

  RecoverOptions opts;
  opts.capacity = cfg.sim.capacity;
  opts.w_truncation = cfg.w.truncation;
  opts.meta_replicates = cfg.recover.meta_replicates;
  opts.envelope_level = cfg.recover.envelope_level;
  opts.candidate_max = cfg.recover.candidate_max;
  opts.threads = cfg.threads;

  const RecoverMode mode = cfg.recover.mode == "deterministic"
                               ? RecoverMode::Deterministic
                               : RecoverMode::Interval;

  std::optional<SchroederH> h;
  if (cfg.recover.h_table && cfg.recover.h_sidecar) {
    std::ifstream csv(*cfg.recover.h_table);
    std::ifstream side(*cfg.recover.h_sidecar);
    if (!csv || !side)
      throw std::runtime_error("cannot open the stored h table or its sidecar");
    json sidecar = json::parse(side);
    h.emplace(SchroederH::from_csv(csv, sidecar));
  } else {
    // Size the table: wide enough for every candidate's W range (interval
    // mode) or for inverting the observation median (deterministic mode).
    RunConfig sized = cfg;
    if (!sized.h.x_max) {
      double x_max = 2.0 * static_cast<double>(cfg.recover.candidate_max) + 10.0;
      if (mode == RecoverMode::Deterministic) {
        IteratedMap map(cfg.law);
        const double med = median_of(obs);
        x_max = 8.0;
        for (int i = 0; i < 12; ++i) {
          const auto probe = compute_h(map, x_max, 65, cfg.h.tol);
          if (probe.value_max() > med) break;
          x_max *= 2.0;
        }
      }
      sized.h.x_max = x_max;
    }
    h.emplace(build_h(sized));
  }

  const RecoverResult result =
      recover_z0(obs, *h, cfg.law, mode, rng::derive_key(cfg.seed, "cli/recover"),
                 opts);

  json jr = result.to_json();
  jr["meta"] = meta_header("recover-z0", cfg);
  const fs::path out = dir / "recover.json";
  write_file(out, jr.dump(2) + "\n");
  outcome.artifacts.push_back(out.string());

  std::ostringstream sum;
  sum << "recover-z0: ";
  if (result.point) {
    sum << "z0 = " << *result.point;
  } else if (!result.candidates.empty()) {
    sum << "candidates {";
    for (std::size_t i = 0; i < result.candidates.size(); ++i)
      sum << (i ? ", " : "") << result.candidates[i];
    sum << "}";
  } else {
    sum << "no estimate";
  }
  sum << " (" << result.note << ")";
  outcome.summary = sum.str();
  return outcome;
}

RunOutcome run_validate_law(const RunConfig& cfg) {
  RunOutcome outcome;
  const fs::path dir = prepare_out_dir(cfg);
  std::vector<double> x_grid;
  if (cfg.assumptions.x_max) {
    const double hi = *cfg.assumptions.x_max;
    const std::uint64_t pts = cfg.assumptions.x_points;
    for (std::uint64_t i = 0; i < pts; ++i)
      x_grid.push_back(hi * static_cast<double>(i) / static_cast<double>(pts - 1));
  } else {
    x_grid = default_density_grid(cfg.law);
  }
  const auto report =
      validate_assumptions(cfg.law, x_grid, cfg.assumptions.capacity_grid);

  json jr = report.to_json();
  jr["meta"] = meta_header("validate-law", cfg);
  const fs::path out = dir / "assumptions.json";
  write_file(out, jr.dump(2) + "\n");
  outcome.artifacts.push_back(out.string());

  std::ostringstream sum;
  sum << "validate-law: " << (report.all_verified() ? "PASS" : "FAIL");
  for (const auto& r : report.results) {
    sum << "\n  " << r.id << ": " << to_string(r.status);
    if (r.witness_x) sum << " (witness x = " << *r.witness_x;
    if (r.witness_capacity) sum << ", K = " << *r.witness_capacity;
    if (r.witness_x) sum << ")";
  }
  outcome.summary = sum.str();
  outcome.exit_code = report.all_verified() ? 0 : 1;
  return outcome;
}

}  // namespace

RunOutcome run_command(const std::string& subcommand, const RunConfig& cfg) {
  if (subcommand == "simulate") return run_simulate(cfg);
  if (subcommand == "coupled") return run_coupled(cfg);
  if (subcommand == "compute-h") return run_compute_h(cfg);
  if (subcommand == "sample-w") return run_sample_w(cfg);
  if (subcommand == "verify") return run_verify(cfg);
  if (subcommand == "recover-z0") return run_recover(cfg);
  if (subcommand == "validate-law") return run_validate_law(cfg);
  throw std::invalid_argument("unknown subcommand '" + subcommand + "'");
}

}  // namespace branchcap
