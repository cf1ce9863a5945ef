#include "branchcap/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace branchcap {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw std::invalid_argument("config: " + path + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key '" + path + key + "'");
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

OffspringLaw parse_law(const json& j) {
  if (!j.is_object() || !j.contains("family"))
    throw std::invalid_argument("config: law.family is required");
  const std::string family = j.at("family").get<std::string>();
  try {
    if (family == "binary_split") {
      check_keys(j, "law.", {"family", "p0", "beta", "kappa"});
      return OffspringLaw::binary_split(j.at("p0").get<double>(),
                                        j.at("beta").get<double>(),
                                        get_or(j, "kappa", 0.0));
    }
    if (family == "beverton_holt_poisson") {
      check_keys(j, "law.", {"family", "a", "b", "kappa"});
      return OffspringLaw::beverton_holt_poisson(j.at("a").get<double>(),
                                                 j.at("b").get<double>(),
                                                 get_or(j, "kappa", 0.0));
    }
    if (family == "user_tabulated") {
      check_keys(j, "law.", {"family", "table", "knots"});
      if (j.contains("table")) {
        std::ifstream in(j.at("table").get<std::string>());
        if (!in)
          throw std::invalid_argument("cannot open tabulated-law CSV '" +
                                      j.at("table").get<std::string>() + "'");
        return OffspringLaw::user_tabulated_from_csv(in);
      }
      return OffspringLaw::from_json(
          json{{"family", "user_tabulated"}, {"knots", j.at("knots")}});
    }
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config: law: ") + e.what());
  }
  throw std::invalid_argument("config: law.family '" + family + "' is not known");
}

const std::set<std::string> kExperimentIds = {
    "verify_theorem1", "verify_fixed_time", "verify_main",
    "verify_corollary_shift", "verify_sublog"};

}  // namespace

namespace {

RunConfig parse_document(const json& doc);

}  // namespace

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  try {
    return parse_document(doc);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: malformed value: ") + e.what());
  }
}

namespace {

RunConfig parse_document(const json& doc) {
  check_keys(doc, "", {"law", "sim", "simulate", "h", "w", "experiment", "recover",
                       "assumptions", "out_dir", "seed", "threads", "quiet"});
  if (!doc.contains("law"))
    throw std::invalid_argument("config: missing required section 'law'");

  RunConfig cfg;
  cfg.law = parse_law(doc.at("law"));

  if (doc.contains("sim")) {
    const json& s = doc.at("sim");
    check_keys(s, "sim.", {"capacity", "initial_count", "c", "gamma",
                           "max_generations", "mode"});
    cfg.sim.capacity = get_or(s, "capacity", cfg.sim.capacity);
    cfg.sim.initial_count = get_or<std::uint64_t>(s, "initial_count",
                                                  cfg.sim.initial_count);
    cfg.sim.c_exponent = get_or(s, "c", cfg.sim.c_exponent);
    cfg.sim.gamma_exponent = get_or(s, "gamma", cfg.sim.gamma_exponent);
    cfg.sim.max_generations = get_or<std::uint64_t>(s, "max_generations",
                                                    cfg.sim.max_generations);
    const std::string mode = get_or<std::string>(s, "mode", "fast");
    if (mode == "exact")
      cfg.sim.mode = SimMode::Exact;
    else if (mode == "fast")
      cfg.sim.mode = SimMode::Fast;
    else
      throw std::invalid_argument("config: sim.mode must be 'exact' or 'fast'");
  }
  if (!(cfg.sim.capacity >= 1.0))
    throw std::invalid_argument("config: sim.capacity must be >= 1");
  if (cfg.sim.initial_count < 1)
    throw std::invalid_argument("config: sim.initial_count must be >= 1");
  if (!(cfg.sim.c_exponent > 0.5))
    throw std::invalid_argument("config: sim.c: c must exceed 1/2");
  if (!(cfg.sim.gamma_exponent > cfg.sim.c_exponent))
    throw std::invalid_argument("config: sim.gamma: gamma must exceed c");
  if (!(cfg.sim.gamma_exponent < 1.0))
    throw std::invalid_argument("config: sim.gamma: gamma must be below 1");

  if (doc.contains("simulate")) {
    const json& s = doc.at("simulate");
    check_keys(s, "simulate.", {"replicates"});
    cfg.simulate.replicates = get_or<std::uint64_t>(s, "replicates", 1);
    if (cfg.simulate.replicates < 1)
      throw std::invalid_argument("config: simulate.replicates must be >= 1");
  }

  if (doc.contains("h")) {
    const json& s = doc.at("h");
    check_keys(s, "h.", {"x_max", "knots", "tol"});
    if (s.contains("x_max") && !s.at("x_max").is_null())
      cfg.h.x_max = s.at("x_max").get<double>();
    cfg.h.knots = get_or<std::uint64_t>(s, "knots", cfg.h.knots);
    cfg.h.tol = get_or(s, "tol", cfg.h.tol);
    if (cfg.h.x_max && !(*cfg.h.x_max > 0.0))
      throw std::invalid_argument("config: h.x_max must be > 0");
    if (cfg.h.knots < 3) throw std::invalid_argument("config: h.knots must be >= 3");
    if (!(cfg.h.tol > 0.0)) throw std::invalid_argument("config: h.tol must be > 0");
  }

  if (doc.contains("w")) {
    const json& s = doc.at("w");
    check_keys(s, "w.", {"truncation", "replicates"});
    cfg.w.truncation = get_or<std::uint64_t>(s, "truncation", cfg.w.truncation);
    cfg.w.replicates = get_or<std::uint64_t>(s, "replicates", cfg.w.replicates);
    if (cfg.w.truncation < 1)
      throw std::invalid_argument("config: w.truncation must be >= 1");
    if (cfg.w.replicates < 2)
      throw std::invalid_argument("config: w.replicates must be >= 2");
  }

  if (doc.contains("experiment")) {
    const json& s = doc.at("experiment");
    check_keys(s, "experiment.", {"id", "capacity_grid", "replicates", "x0", "n",
                                  "shifts", "lambda", "lambda_constant"});
    cfg.experiment.id = get_or<std::string>(s, "id", cfg.experiment.id);
    if (!kExperimentIds.count(cfg.experiment.id))
      throw std::invalid_argument("config: experiment.id '" + cfg.experiment.id +
                                  "' is not known");
    cfg.experiment.capacity_grid =
        get_or(s, "capacity_grid", cfg.experiment.capacity_grid);
    cfg.experiment.replicates = get_or<std::uint64_t>(s, "replicates",
                                                      cfg.experiment.replicates);
    cfg.experiment.x0 = get_or(s, "x0", cfg.experiment.x0);
    cfg.experiment.n = get_or<std::uint64_t>(s, "n", cfg.experiment.n);
    cfg.experiment.shifts = get_or(s, "shifts", cfg.experiment.shifts);
    cfg.experiment.lambda = get_or<std::string>(s, "lambda", cfg.experiment.lambda);
    cfg.experiment.lambda_constant =
        get_or<std::int64_t>(s, "lambda_constant", cfg.experiment.lambda_constant);
    if (cfg.experiment.capacity_grid.empty())
      throw std::invalid_argument("config: experiment.capacity_grid must be non-empty");
    if (cfg.experiment.replicates < 2)
      throw std::invalid_argument("config: experiment.replicates must be >= 2");
    const std::set<std::string> lambdas = {"sqrt-log", "log-log", "constant", "log"};
    if (!lambdas.count(cfg.experiment.lambda))
      throw std::invalid_argument(
          "config: experiment.lambda must be one of sqrt-log, log-log, constant, log");
  }

  if (doc.contains("recover")) {
    const json& s = doc.at("recover");
    check_keys(s, "recover.", {"mode", "observations", "candidate_max",
                               "envelope_level", "meta_replicates", "h_table",
                               "h_sidecar"});
    cfg.recover.mode = get_or<std::string>(s, "mode", cfg.recover.mode);
    if (cfg.recover.mode != "deterministic" && cfg.recover.mode != "interval")
      throw std::invalid_argument(
          "config: recover.mode must be 'deterministic' or 'interval'");
    cfg.recover.observations = get_or<std::string>(s, "observations", "");
    cfg.recover.candidate_max =
        get_or<std::uint64_t>(s, "candidate_max", cfg.recover.candidate_max);
    cfg.recover.envelope_level =
        get_or(s, "envelope_level", cfg.recover.envelope_level);
    cfg.recover.meta_replicates =
        get_or<std::uint64_t>(s, "meta_replicates", cfg.recover.meta_replicates);
    if (s.contains("h_table") && !s.at("h_table").is_null())
      cfg.recover.h_table = s.at("h_table").get<std::string>();
    if (s.contains("h_sidecar") && !s.at("h_sidecar").is_null())
      cfg.recover.h_sidecar = s.at("h_sidecar").get<std::string>();
    if (!(cfg.recover.envelope_level > 0.0 && cfg.recover.envelope_level < 1.0))
      throw std::invalid_argument("config: recover.envelope_level must lie in (0, 1)");
  }

  if (doc.contains("assumptions")) {
    const json& s = doc.at("assumptions");
    check_keys(s, "assumptions.", {"x_max", "x_points", "capacity_grid"});
    if (s.contains("x_max") && !s.at("x_max").is_null())
      cfg.assumptions.x_max = s.at("x_max").get<double>();
    cfg.assumptions.x_points =
        get_or<std::uint64_t>(s, "x_points", cfg.assumptions.x_points);
    cfg.assumptions.capacity_grid =
        get_or(s, "capacity_grid", cfg.assumptions.capacity_grid);
    if (cfg.assumptions.x_points < 3)
      throw std::invalid_argument("config: assumptions.x_points must be >= 3");
    if (cfg.assumptions.capacity_grid.empty())
      throw std::invalid_argument("config: assumptions.capacity_grid must be non-empty");
  }

  cfg.out_dir = get_or<std::string>(doc, "out_dir", cfg.out_dir);
  cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.threads = get_or<unsigned>(doc, "threads", cfg.threads);
  cfg.quiet = get_or(doc, "quiet", cfg.quiet);
  return cfg;
}

}  // namespace

nlohmann::json emit_config(const RunConfig& cfg) {
  json j;
  j["law"] = cfg.law.to_json();
  j["sim"] = {{"capacity", cfg.sim.capacity},
              {"initial_count", cfg.sim.initial_count},
              {"c", cfg.sim.c_exponent},
              {"gamma", cfg.sim.gamma_exponent},
              {"max_generations", cfg.sim.max_generations},
              {"mode", cfg.sim.mode == SimMode::Exact ? "exact" : "fast"}};
  j["simulate"] = {{"replicates", cfg.simulate.replicates}};
  j["h"] = {{"x_max", cfg.h.x_max ? json(*cfg.h.x_max) : json(nullptr)},
            {"knots", cfg.h.knots},
            {"tol", cfg.h.tol}};
  j["w"] = {{"truncation", cfg.w.truncation}, {"replicates", cfg.w.replicates}};
  j["experiment"] = {{"id", cfg.experiment.id},
                     {"capacity_grid", cfg.experiment.capacity_grid},
                     {"replicates", cfg.experiment.replicates},
                     {"x0", cfg.experiment.x0},
                     {"n", cfg.experiment.n},
                     {"shifts", cfg.experiment.shifts},
                     {"lambda", cfg.experiment.lambda},
                     {"lambda_constant", cfg.experiment.lambda_constant}};
  j["recover"] = {{"mode", cfg.recover.mode},
                  {"observations", cfg.recover.observations},
                  {"candidate_max", cfg.recover.candidate_max},
                  {"envelope_level", cfg.recover.envelope_level},
                  {"meta_replicates", cfg.recover.meta_replicates},
                  {"h_table", cfg.recover.h_table ? json(*cfg.recover.h_table)
                                                  : json(nullptr)},
                  {"h_sidecar", cfg.recover.h_sidecar ? json(*cfg.recover.h_sidecar)
                                                      : json(nullptr)}};
  j["assumptions"] = {
      {"x_max", cfg.assumptions.x_max ? json(*cfg.assumptions.x_max) : json(nullptr)},
      {"x_points", cfg.assumptions.x_points},
      {"capacity_grid", cfg.assumptions.capacity_grid}};
  j["out_dir"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["quiet"] = cfg.quiet;
  return j;
}

std::string emit_config_text(const RunConfig& cfg) { return emit_config(cfg).dump(2); }

}  // namespace branchcap
