// pinnevo command-line front end: run, truth, landscape, report.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pinnevo/pinnevo.hpp"

namespace fs = std::filesystem;
using namespace pinnevo;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kConfig = 2;

struct RunArgs {
  std::string config;
  std::string out = "pinnevo-run";
  std::vector<std::string> overrides;
  std::string truth_cache;
};

int cmd_run(const RunArgs& a) {
  std::vector<Override> ovs;
  for (const auto& s : a.overrides) ovs.push_back(parse_override(s));
  Json resolved;
  const ExperimentConfig cfg = load_config(a.config, ovs, &resolved);
  const ProblemDef problem = make_problem(cfg.problem);
  std::cerr << "pinnevo: " << to_string(cfg.problem) << " / " << to_string(cfg.optimizer.algorithm) << ", "
            << cfg.seeds.size() << " seed(s), config " << cfg.config_hash << "\n";
  const Field truth = obtain_truth(problem, cfg.truth, a.truth_cache);
  const auto records = run(cfg, truth);
  write_outputs(a.out, records, cfg, truth);
  io::write_atomic(fs::path(a.out) / "config.resolved.json", resolved.dump(2) + "\n");
  int failed = 0;
  for (const auto& r : records) {
    if (r.failed) {
      ++failed;
      std::cerr << "seed " << r.seed << " failed: " << r.error << "\n";
    } else {
      std::cerr << "seed " << r.seed << ": loss " << r.training_loss << ", prediction mse " << r.prediction_mse << ", "
                << r.evaluations << " evaluations\n";
    }
  }
  return failed == static_cast<int>(records.size()) ? kRuntime : kOk;
}

struct TruthArgs {
  std::string problem;
  std::string out;
  Index n = 1001;
  SolverConfig solver;
  bool no_limiter = false;
};

int cmd_truth(TruthArgs a) {
  ProblemDef problem;
  try {
    problem = make_problem(a.problem);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  a.solver.limiter = !a.no_limiter;
  Field f;
  if (problem.id == ProblemId::ConvectionDiffusion || problem.id == ProblemId::Projectile) {
    f = analytic_field(problem, a.n);
  } else {
    SolverStats stats;
    f = simulate(problem, a.solver, &stats);
    std::cerr << "pinnevo: " << stats.steps << " steps of dt " << stats.dt << "\n";
  }
  save_truth(f, a.out);
  return kOk;
}

struct LandscapeArgs {
  std::string problem;
  std::string mode = "init";
  std::string checkpoint;
  std::string truth;
  std::string out = "pinnevo-landscape";
  std::uint64_t seed = 1;
  double half_width = 1.0;
  Index resolution = 20;
  Index top_k = 2;
};

int cmd_landscape(const LandscapeArgs& a) {
  ProblemDef problem;
  try {
    problem = make_problem(a.problem);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  MlpSpec spec = default_spec(problem.id);
  std::uint64_t seed = a.seed;
  ParamVector w;
  Phase phase = Phase::Init;
  if (a.mode == "trained") {
    if (a.checkpoint.empty()) throw ConfigError("trained mode needs --checkpoint");
    if (!fs::exists(a.checkpoint)) throw ConfigError("checkpoint not found: " + a.checkpoint);
    Checkpoint ck = load_checkpoint(a.checkpoint);
    spec = ck.spec;
    seed = ck.seed;
    w = ck.params;
    phase = Phase::Trained;
  } else if (a.mode == "init") {
    w = xavier_init(spec, RngSeed{seed});
  } else {
    throw ConfigError("--mode must be 'init' or 'trained'");
  }
  std::optional<Field> truth;
  if (!a.truth.empty()) truth = load_truth(problem.id, a.truth);
  const LandscapeProbe probe(problem, spec, RngSeed{seed}, truth ? &*truth : nullptr);

  const std::string tag = io::fnv1a_hex(a.problem + "|" + a.mode + "|" + std::to_string(seed) + "|" +
                                        format_double(a.half_width) + "|" + std::to_string(a.resolution));
  const std::string comment = std::string("pinnevo ") + kVersion + " config_hash=" + tag;
  fs::create_directories(a.out);
  for (ModelKind kind : {ModelKind::Pinn, ModelKind::Dnn}) {
    EigenPairs pairs;
    const Index k = std::max<Index>(a.top_k, 2);
    SpectrumReport rep = probe.report(kind, phase, w, k, seed, &pairs);
    rep.top_eigenvalues.resize(static_cast<std::size_t>(a.top_k));
    Json j = to_json(rep);
    j["problem"] = std::string(to_string(problem.id));
    j["pinnevo_version"] = kVersion;
    j["config_hash"] = tag;
    const std::string name(to_string(kind));
    io::write_atomic(fs::path(a.out) / ("spectrum_" + name + ".json"), j.dump(2) + "\n");
    const SurfaceGrid g = surface([&](const ParamVector& p) { return probe.loss(kind, p); }, w, pairs.vectors.col(0),
                                  pairs.vectors.col(1), a.half_width, a.resolution);
    io::write_atomic(fs::path(a.out) / ("surface_" + name + ".csv"), surface_csv(g, comment));
  }
  return kOk;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
  std::string csv = std::string(kReportHeader) + "\n";
  for (const auto& d : dirs) {
    const fs::path p = fs::path(d) / "summary.json";
    if (!fs::exists(p)) throw ConfigError("no summary.json in " + d);
    const Json s = Json::parse(io::read_file(p));
    if (!s.contains("table") || s["table"].is_null()) {
      std::cerr << "pinnevo: skipping " << d << " (all seeds failed)\n";
      continue;
    }
    SummaryRow r;
    r.problem = s.at("problem").get<std::string>();
    r.optimizer = s.at("optimizer").get<std::string>();
    const Json& t = s["table"];
    r.seeds = t.at("seeds").get<Index>();
    r.median_training_loss = t.at("median_training_loss").get<double>();
    r.median_prediction_mse = t.at("median_prediction_mse").get<double>();
    r.min_prediction_mse = t.at("min_prediction_mse").get<double>();
    r.max_prediction_mse = t.at("max_prediction_mse").get<double>();
    csv += report_line(r) + "\n";
  }
  if (out.empty() || out == "-") {
    std::cout << csv;
  } else {
    io::write_atomic(out, csv);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed network training benchmarks with evolution strategies"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Train on a benchmark problem as described by a config file");
  run_cmd->add_option("-c,--config", run_args.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("-o,--out", run_args.out, "Output directory")->capture_default_str();
  run_cmd->add_option("-s,--set", run_args.overrides, "Override a config key: key=value (repeatable)");
  run_cmd->add_option("--truth-cache", run_args.truth_cache, "Directory caching simulated truth fields");
  run_cmd->add_option("overrides", run_args.overrides, "Further key=value overrides");

  TruthArgs truth_args;
  auto* truth_cmd = app.add_subcommand("truth", "Write a ground-truth field (.pinnfield)");
  truth_cmd->add_option("problem", truth_args.problem, "Problem id")->required();
  truth_cmd->add_option("-o,--out", truth_args.out, "Output file")->required();
  truth_cmd->add_option("--n", truth_args.n, "Grid nodes for closed-form problems")->capture_default_str();
  truth_cmd->add_option("--nx", truth_args.solver.nx, "Solver cells")->capture_default_str();
  truth_cmd->add_option("--cfl", truth_args.solver.cfl, "Courant number")->capture_default_str();
  truth_cmd->add_option("--end-time", truth_args.solver.end_time, "Final time")->capture_default_str();
  truth_cmd->add_option("--snapshots", truth_args.solver.snapshots, "Stored time levels")->capture_default_str();
  truth_cmd->add_flag("--no-limiter", truth_args.no_limiter, "Disable the universal limiter");

  LandscapeArgs land_args;
  auto* land_cmd = app.add_subcommand("landscape", "Hessian spectra and loss surfaces for PINN and DNN losses");
  land_cmd->add_option("problem", land_args.problem, "Problem id")->required();
  land_cmd->add_option("--mode", land_args.mode, "init or trained")->capture_default_str();
  land_cmd->add_option("--checkpoint", land_args.checkpoint, "Checkpoint for trained mode");
  land_cmd->add_option("--truth", land_args.truth, "Truth field labelling the DNN loss");
  land_cmd->add_option("--seed", land_args.seed, "Initialization and collocation seed")->capture_default_str();
  land_cmd->add_option("--half-width", land_args.half_width, "Surface extent along each direction")
      ->capture_default_str();
  land_cmd->add_option("--resolution", land_args.resolution, "Surface points per half axis")->capture_default_str();
  land_cmd->add_option("--top-k", land_args.top_k, "Eigenvalues to report")->capture_default_str();
  land_cmd->add_option("-o,--out", land_args.out, "Output directory")->capture_default_str();

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Summarize run directories as a results table (CSV)");
  report_cmd->add_option("runs", report_dirs, "Run output directories")->required();
  report_cmd->add_option("-o,--out", report_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run_args);
    if (*truth_cmd) return cmd_truth(truth_args);
    if (*land_cmd) return cmd_landscape(land_args);
    if (*report_cmd) return cmd_report(report_dirs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "pinnevo: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "pinnevo: invalid input: " << e.what() << "\n";
    return kConfig;
  } catch (const SolverError& e) {
    std::cerr << "pinnevo: solver failed: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "pinnevo: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
