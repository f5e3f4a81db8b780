#pragma once

// Experiment configuration files (JSON) and dotted-key overrides.
//
// A file names a problem and an algorithm and may override any default; the
// defaults per problem are the benchmark settings (network, collocation,
// truth and every optimizer's hyperparameters). Unknown keys are rejected.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinnevo/harness.hpp"
#include "pinnevo/io.hpp"

namespace pinnevo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Benchmark hyperparameters per problem and optimizer.
inline Json optimizer_defaults(ProblemId id) {
  struct Row {
    Index cma_pop;
    double cma_sigma;
    Index xnes_pop;
    double xnes_lr, xnes_sigma, xnes_momentum;
    Index batch_constraint;
    double sgd_lr;
  };
  Row r{};
  switch (id) {
    case ProblemId::ConvectionDiffusion: r = {80, 5e-2, 100, 1e-2, 1e-3, 0.99, 2, 1e-3}; break;
    case ProblemId::Projectile: r = {80, 1e-3, 50, 1e-3, 1e-3, 0.99, 1, 1e-3}; break;
    case ProblemId::KdV: r = {50, 5e-2, 100, 1e-2, 1e-3, 0.9, 5, 1e-1}; break;
    case ProblemId::LinearizedBurgers: r = {50, 1e-2, 100, 1e-2, 1e-3, 0.9, 5, 1e-2}; break;
    case ProblemId::NonlinearBurgers: r = {100, 1e-2, 50, 1e-3, 1e-3, 0.99, 5, 1e-1}; break;
  }
  return Json{
      {"cma-es", {{"pop_size", r.cma_pop}, {"sigma0", r.cma_sigma}}},
      {"xnes-nag", {{"pop_size", r.xnes_pop}, {"lr", r.xnes_lr}, {"sigma0", r.xnes_sigma}, {"momentum", r.xnes_momentum},
                    {"lr_sigma", 0.0}, {"lr_shape", 0.0}}},
      {"sgd", {{"batch_interior", 100}, {"batch_constraint", r.batch_constraint}, {"lr", r.sgd_lr}}},
      {"batch-gd", {{"lr", r.sgd_lr}}}};
}

inline std::string to_string(SamplingMode m) { return m == SamplingMode::Grid ? "grid" : "random"; }

inline std::string to_string(TruthKind k) {
  switch (k) {
    case TruthKind::Analytic: return "analytic";
    case TruthKind::Simulate: return "simulate";
    case TruthKind::File: return "file";
  }
  return "?";
}

/// Fully populated configuration document for a problem; also the schema
/// against which user keys are checked.
inline Json default_config_json(ProblemId id, Algorithm algorithm = Algorithm::CmaEs) {
  const CollocationOptions c = default_collocation(id);
  const TruthSpec t = default_truth(id);
  return Json{{"problem", std::string(to_string(id))},
              {"algorithm", std::string(to_string(algorithm))},
              {"seeds", {1, 2, 3, 4, 5}},
              {"budget", {{"wall_seconds", 60.0}, {"max_evaluations", -1}}},
              {"log_cadence", 1000},
              {"workers", 0},
              {"network", default_spec(id)},
              {"collocation", {{"mode", to_string(c.mode)}, {"total", c.total}, {"nx", c.nx}, {"nt", c.nt}}},
              {"truth",
               {{"source", to_string(t.kind)},
                {"n", t.n},
                {"nx", t.solver.nx},
                {"cfl", t.solver.cfl},
                {"limiter", t.solver.limiter},
                {"path", t.path}}},
              {"optimizers", optimizer_defaults(id)}};
}

namespace detail {

inline void check_keys(const Json& user, const Json& schema, const std::string& where) {
  if (!user.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!schema.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    const Json& s = schema.at(it.key());
    if (s.is_object()) {
      if (!it.value().is_object()) throw ConfigError("config key '" + path + "' must be an object");
      check_keys(it.value(), s, path);
    }
  }
}

inline void set_dotted(Json& doc, const std::string& key, const Json& value) {
  Json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("malformed override key '" + key + "'");
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = Json::object();
    node = &(*node)[part];
    pos = dot + 1;
  }
}

inline Json parse_override_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
    return Json(text);
  }
}

template <class T>
T get_as(const Json& doc, const char* key, const std::string& where) {
  try {
    return doc.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("config key '" + where + key + "' has the wrong type: " + e.what());
  }
}

}  // namespace detail

/// "key=value" pairs; `optimizer.<name>` addresses the selected algorithm's section.
struct Override {
  std::string key;
  std::string value;
};

inline Override parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not of the form key=value");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

/// Resolves a configuration document (after overrides) into an experiment.
/// Returns the merged document through `resolved` when given.
inline ExperimentConfig load_config_json(Json user, const std::vector<Override>& overrides = {},
                                         Json* resolved = nullptr) {
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<Override> optimizer_overrides;
  for (const auto& o : overrides) {
    if (o.key.rfind("optimizer.", 0) == 0) {
      optimizer_overrides.push_back(o);
    } else {
      detail::set_dotted(user, o.key, detail::parse_override_value(o.value));
    }
  }
  if (!user.contains("problem") || !user["problem"].is_string()) throw ConfigError("config needs a 'problem' string");
  if (!user.contains("algorithm") || !user["algorithm"].is_string())
    throw ConfigError("config needs an 'algorithm' string");
  ProblemId pid;
  Algorithm alg;
  try {
    pid = parse_problem_id(user["problem"].get<std::string>());
    alg = parse_algorithm(user["algorithm"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const auto& o : optimizer_overrides)
    detail::set_dotted(user, "optimizers." + std::string(to_string(alg)) + "." + o.key.substr(10),
                       detail::parse_override_value(o.value));

  Json doc = default_config_json(pid, alg);
  detail::check_keys(user, doc, "");
  if (user.contains("network")) doc["network"] = Json::object();  // replaced wholesale, not merged
  doc.merge_patch(user);

  ExperimentConfig cfg;
  cfg.problem = pid;
  cfg.optimizer.algorithm = alg;
  try {
    cfg.spec = doc.at("network").get<MlpSpec>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad network description: ") + e.what());
  }
  cfg.seeds = detail::get_as<std::vector<std::uint64_t>>(doc, "seeds", "");
  const Json& b = doc["budget"];
  cfg.budget.wall_seconds = detail::get_as<double>(b, "wall_seconds", "budget.");
  cfg.budget.max_evaluations = detail::get_as<std::int64_t>(b, "max_evaluations", "budget.");
  cfg.log_cadence = detail::get_as<Index>(doc, "log_cadence", "");
  cfg.workers = detail::get_as<Index>(doc, "workers", "");

  const Json& c = doc["collocation"];
  const auto mode = detail::get_as<std::string>(c, "mode", "collocation.");
  if (mode != "grid" && mode != "random") throw ConfigError("collocation.mode must be 'grid' or 'random'");
  cfg.collocation.mode = mode == "grid" ? SamplingMode::Grid : SamplingMode::Random;
  cfg.collocation.total = detail::get_as<Index>(c, "total", "collocation.");
  cfg.collocation.nx = detail::get_as<Index>(c, "nx", "collocation.");
  cfg.collocation.nt = detail::get_as<Index>(c, "nt", "collocation.");

  const Json& t = doc["truth"];
  const auto source = detail::get_as<std::string>(t, "source", "truth.");
  if (source == "analytic") {
    cfg.truth.kind = TruthKind::Analytic;
  } else if (source == "simulate") {
    cfg.truth.kind = TruthKind::Simulate;
  } else if (source == "file") {
    cfg.truth.kind = TruthKind::File;
  } else {
    throw ConfigError("truth.source must be 'analytic', 'simulate' or 'file'");
  }
  cfg.truth.n = detail::get_as<Index>(t, "n", "truth.");
  cfg.truth.solver.nx = detail::get_as<Index>(t, "nx", "truth.");
  cfg.truth.solver.cfl = detail::get_as<double>(t, "cfl", "truth.");
  cfg.truth.solver.limiter = detail::get_as<bool>(t, "limiter", "truth.");
  cfg.truth.path = detail::get_as<std::string>(t, "path", "truth.");

  const Json& o = doc["optimizers"];
  const std::string opt_where = "optimizers.";
  cfg.optimizer.cma.pop_size = detail::get_as<Index>(o["cma-es"], "pop_size", opt_where + "cma-es.");
  cfg.optimizer.cma.sigma0 = detail::get_as<double>(o["cma-es"], "sigma0", opt_where + "cma-es.");
  const Json& x = o["xnes-nag"];
  cfg.optimizer.xnes.pop_size = detail::get_as<Index>(x, "pop_size", opt_where + "xnes-nag.");
  cfg.optimizer.xnes.lr = detail::get_as<double>(x, "lr", opt_where + "xnes-nag.");
  cfg.optimizer.xnes.sigma0 = detail::get_as<double>(x, "sigma0", opt_where + "xnes-nag.");
  cfg.optimizer.xnes.momentum = detail::get_as<double>(x, "momentum", opt_where + "xnes-nag.");
  cfg.optimizer.xnes.lr_sigma = detail::get_as<double>(x, "lr_sigma", opt_where + "xnes-nag.");
  cfg.optimizer.xnes.lr_shape = detail::get_as<double>(x, "lr_shape", opt_where + "xnes-nag.");
  const Json& s = alg == Algorithm::BatchGd ? o["batch-gd"] : o["sgd"];
  const std::string sw = opt_where + (alg == Algorithm::BatchGd ? "batch-gd." : "sgd.");
  cfg.optimizer.sgd.lr = detail::get_as<double>(s, "lr", sw);
  cfg.optimizer.sgd.batch_interior = detail::get_as<Index>(o["sgd"], "batch_interior", opt_where + "sgd.");
  cfg.optimizer.sgd.batch_constraint = detail::get_as<Index>(o["sgd"], "batch_constraint", opt_where + "sgd.");

  try {
    cfg.validate();
    if (cfg.spec.input_dim != make_problem(pid).input_dim() ||
        param_count(cfg.spec) < 1 || Mlp(cfg.spec).output_dim() != make_problem(pid).output_dim())
      throw std::invalid_argument("network shape does not fit problem '" + std::string(to_string(pid)) + "'");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.config_hash = io::fnv1a_hex(doc.dump());
  if (resolved) *resolved = doc;
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides = {},
                                    Json* resolved = nullptr) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  Json user;
  try {
    user = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return load_config_json(std::move(user), overrides, resolved);
}

}  // namespace pinnevo
