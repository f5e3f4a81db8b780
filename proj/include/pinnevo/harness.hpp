#pragma once

// End-to-end training runs: budgets, convergence logs, prediction error
// against ground truth, and aggregation over seeds.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <sys/utsname.h>

#include "pinnevo/io.hpp"
#include "pinnevo/mlp.hpp"
#include "pinnevo/optimizers.hpp"
#include "pinnevo/oracles.hpp"
#include "pinnevo/problems.hpp"

namespace pinnevo {

/// Stops at whichever limit comes first. Without a wall-clock limit a run is
/// fully determined by its seed.
struct Budget {
  double wall_seconds = 0.0;           // <= 0: no wall-clock limit
  std::int64_t max_evaluations = -1;   // < 0: no evaluation limit

  bool has_wall() const { return wall_seconds > 0.0; }
  bool has_evals() const { return max_evaluations >= 0; }
  bool deterministic() const { return !has_wall(); }
};

enum class TruthKind { Analytic, Simulate, File };

struct TruthSpec {
  TruthKind kind = TruthKind::Analytic;
  Index n = 1001;         // analytic grid nodes
  SolverConfig solver;    // simulate
  std::string path;       // file
};

inline TruthSpec default_truth(ProblemId id) {
  TruthSpec t;
  switch (id) {
    case ProblemId::ConvectionDiffusion:
    case ProblemId::Projectile: t.kind = TruthKind::Analytic; break;
    case ProblemId::NonlinearBurgers:
      t.kind = TruthKind::Simulate;
      t.solver.nx = 4096;
      break;
    default: t.kind = TruthKind::Simulate; break;
  }
  return t;
}

struct ExperimentConfig {
  ProblemId problem = ProblemId::ConvectionDiffusion;
  MlpSpec spec;
  OptimizerConfig optimizer;
  std::vector<std::uint64_t> seeds{1};
  Budget budget;
  Index log_cadence = 1000;  // evaluations between convergence records
  TruthSpec truth;
  CollocationOptions collocation;
  Index workers = 0;         // 0: PINNEVO_WORKERS or hardware concurrency
  std::string config_hash;   // set by the config loader

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (!budget.has_wall() && !budget.has_evals())
      throw std::invalid_argument("budget needs wall_seconds > 0 or max_evaluations >= 0");
    if (log_cadence < 1) throw std::invalid_argument("log_cadence must be positive");
    spec.validate();
    pinnevo::validate(optimizer);
  }
};

/// Experiment with the problem's default network, collocation and truth.
inline ExperimentConfig default_experiment(ProblemId id, Algorithm algorithm) {
  ExperimentConfig c;
  c.problem = id;
  c.spec = default_spec(id);
  c.optimizer.algorithm = algorithm;
  c.truth = default_truth(id);
  c.collocation = default_collocation(id);
  return c;
}

// ---------------------------------------------------------------------------

/// Mean over all truth nodes and outputs of (prediction - truth)^2.
inline double prediction_mse(const Mlp& mlp, const ParamVector& params, const Field& truth) {
  if (truth.components != mlp.output_dim()) throw std::invalid_argument("truth components do not match network outputs");
  const Eigen::MatrixXd inputs = truth.inputs();
  if (inputs.rows() != mlp.input_dim()) throw std::invalid_argument("truth grid dimension does not match network inputs");
  const Eigen::MatrixXd pred = mlp.forward_batch(params, inputs);
  return (pred - truth.targets()).squaredNorm() / static_cast<double>(pred.size());
}

/// Ground truth per `spec`. Simulated fields are cached under `cache_dir`
/// (when non-empty), keyed by problem and solver settings.
inline Field obtain_truth(const ProblemDef& problem, const TruthSpec& spec,
                          const std::filesystem::path& cache_dir = {}) {
  switch (spec.kind) {
    case TruthKind::Analytic: return analytic_field(problem, spec.n);
    case TruthKind::File:
      if (spec.path.empty()) throw std::invalid_argument("truth file path is empty");
      if (!std::filesystem::exists(spec.path)) throw std::runtime_error("truth file not found: " + spec.path);
      return load_truth(problem.id, spec.path);
    case TruthKind::Simulate: {
      std::filesystem::path cached;
      if (!cache_dir.empty()) {
        std::ostringstream key;
        key << to_string(problem.id) << "_nx" << spec.solver.nx << "_cfl" << spec.solver.cfl
            << (spec.solver.limiter ? "" : "_nolim") << "_T" << spec.solver.end_time << "_s" << spec.solver.snapshots
            << ".pinnfield";
        cached = cache_dir / key.str();
        if (std::filesystem::exists(cached)) return load_truth(problem.id, cached);
      }
      Field f = simulate(problem, spec.solver);
      if (!cached.empty()) {
        std::filesystem::create_directories(cache_dir);
        save_truth(f, cached);
      }
      return f;
    }
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------

struct LogPoint {
  double wall_seconds = 0.0;
  std::int64_t evaluations = 0;
  /// Evolution strategies: best candidate of the latest generation;
  /// gradient methods: full loss at the current iterate.
  LossBreakdown current;
  double best_total = 0.0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::vector<LogPoint> log;
  LossBreakdown final_breakdown;  // at the best parameters
  double training_loss = std::numeric_limits<double>::quiet_NaN();
  double prediction_mse = std::numeric_limits<double>::quiet_NaN();
  double elapsed = 0.0;
  std::int64_t evaluations = 0;
  ParamVector best_params;
};

inline std::string host_description() {
  std::string desc;
  utsname u{};
  if (uname(&u) == 0) desc = std::string(u.sysname) + " " + u.release + " " + u.machine;
  std::ifstream cpu("/proc/cpuinfo");
  for (std::string line; std::getline(cpu, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) desc += "; " + line.substr(colon + 2);
      break;
    }
  }
  desc += "; threads=" + std::to_string(std::thread::hardware_concurrency());
  return desc;
}

/// One training run. The collocation set, initial parameters and optimizer
/// stream all derive from `seed`.
inline RunRecord run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const Field& truth) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  RunRecord rec;
  rec.seed = seed;
  const ProblemDef problem = make_problem(cfg.problem);
  const Mlp mlp(cfg.spec);
  const PinnLoss loss(problem, mlp);
  const CollocationSet set = sample_collocation(problem, RngSeed{seed}, cfg.collocation);
  const ParamVector w0 = xavier_init(cfg.spec, RngSeed{seed});

  ParamVector best = w0;
  LossBreakdown best_lb = loss(w0, set);
  std::int64_t evals = 0;
  auto record = [&](const LossBreakdown& current) {
    if (!rec.log.empty() && rec.log.back().evaluations == evals) return;
    rec.log.push_back({elapsed(), evals, current, best_lb.total});
  };
  record(best_lb);

  try {
    auto opt = make_optimizer(cfg.optimizer, w0, RngSeed{seed}, set.interior.cols(), set.constraint.cols());
    const bool es = is_evolutionary(cfg.optimizer.algorithm);
    std::int64_t next_log = cfg.log_cadence;
    LossBreakdown current = best_lb;
    auto consider = [&](const LossBreakdown& lb, const auto& params) {
      // Non-finite losses never become the incumbent.
      if (std::isfinite(lb.total) && lb.total < best_lb.total) {
        best_lb = lb;
        best = params;
      }
    };

    while (true) {
      if (cfg.budget.has_wall() && elapsed() >= cfg.budget.wall_seconds) break;
      const Eigen::MatrixXd& cand = opt->ask();
      const std::int64_t cost = es ? cand.cols() : 1;
      if (cfg.budget.has_evals() && evals + cost > cfg.budget.max_evaluations) break;

      if (es) {
        std::vector<double> fitness(static_cast<std::size_t>(cand.cols()));
        Index gen_best = -1;
        std::vector<LossBreakdown> lbs(static_cast<std::size_t>(cand.cols()));
        for (Index j = 0; j < cand.cols(); ++j) {
          lbs[j] = loss(cand.col(j), set);
          fitness[j] = lbs[j].total;
          if (std::isfinite(fitness[j]) && (gen_best < 0 || fitness[j] < fitness[gen_best])) gen_best = j;
        }
        evals += cost;
        if (gen_best >= 0) {
          current = lbs[gen_best];
          consider(current, cand.col(gen_best));
        }
        opt->tell(fitness);
      } else {
        const auto mb = opt->batch();
        const CollocationSet sub = mb ? select(set, mb->interior, mb->constraint) : CollocationSet{};
        ParamVector g;
        const LossBreakdown lb = loss.with_grad(cand.col(0), mb ? sub : set, g);
        const Eigen::MatrixXd grads = g;
        if (!std::isfinite(lb.total) || !g.allFinite())
          throw std::runtime_error("gradient step produced a non-finite loss at evaluation " + std::to_string(evals));
        evals += cost;
        opt->tell({lb.total}, &grads);
        if (evals >= next_log) {
          current = loss(opt->incumbent(), set);
          consider(current, opt->incumbent());
        }
      }
      if (evals >= next_log) {
        record(current);
        while (next_log <= evals) next_log += cfg.log_cadence;
      }
    }
    if (!es && (rec.log.empty() || rec.log.back().evaluations != evals)) {
      current = loss(opt->incumbent(), set);
      consider(current, opt->incumbent());
    }
    record(current);
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
  }

  rec.evaluations = evals;
  rec.best_params = best;
  rec.final_breakdown = best_lb;
  rec.training_loss = best_lb.total;
  if (!rec.failed) {
    try {
      rec.prediction_mse = prediction_mse(mlp, best, truth);
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
  }
  rec.elapsed = elapsed();
  return rec;
}

inline Index resolve_workers(Index requested, Index tasks) {
  Index w = requested;
  if (const char* env = std::getenv("PINNEVO_WORKERS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw std::invalid_argument("PINNEVO_WORKERS must be a positive integer");
    w = v;
  }
  if (w <= 0) w = std::max<Index>(1, static_cast<Index>(std::thread::hardware_concurrency()));
  return std::max<Index>(1, std::min(w, tasks));
}

/// Runs every seed; seeds are independent tasks spread over worker threads.
/// Records come back in seed order.
inline std::vector<RunRecord> run(const ExperimentConfig& cfg, const Field& truth) {
  cfg.validate();
  if (truth.problem != cfg.problem) throw std::invalid_argument("truth field belongs to a different problem");
  std::vector<RunRecord> records(cfg.seeds.size());
  const Index workers = resolve_workers(cfg.workers, static_cast<Index>(cfg.seeds.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cfg.seeds.size();) records[i] = run_seed(cfg, cfg.seeds[i], truth);
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (Index w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return records;
}

inline std::vector<RunRecord> run(const ExperimentConfig& cfg, const std::filesystem::path& truth_cache = {}) {
  const Field truth = obtain_truth(make_problem(cfg.problem), cfg.truth, truth_cache);
  return run(cfg, truth);
}

// ---------------------------------------------------------------------------

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct EnvelopePoint {
  std::int64_t evaluations = 0;
  double median = 0.0, min = 0.0, max = 0.0;
};

struct SummaryRow {
  std::string problem, optimizer;
  Index seeds = 0;  // successful runs
  double median_training_loss = 0.0;
  double median_prediction_mse = 0.0;
  double min_prediction_mse = 0.0;
  double max_prediction_mse = 0.0;
};

struct Summary {
  SummaryRow row;
  std::vector<EnvelopePoint> envelope;
};

/// Best-so-far loss of a record after `evals` evaluations (step function).
inline double best_at(const RunRecord& r, std::int64_t evals) {
  double v = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : r.log) {
    if (p.evaluations > evals) break;
    v = p.best_total;
  }
  return v;
}

/// Median/min/max convergence envelope over successful records, bucketed at
/// every evaluation count any record logged, plus the results table row.
inline Summary aggregate(const std::vector<RunRecord>& records, ProblemId problem, Algorithm algorithm) {
  std::vector<const RunRecord*> ok;
  for (const auto& r : records)
    if (!r.failed) ok.push_back(&r);
  if (ok.empty()) throw std::runtime_error("all seeds failed; nothing to aggregate");

  Summary s;
  s.row.problem = std::string(to_string(problem));
  s.row.optimizer = std::string(to_string(algorithm));
  s.row.seeds = static_cast<Index>(ok.size());
  std::vector<double> losses, mses;
  for (const auto* r : ok) {
    losses.push_back(r->training_loss);
    mses.push_back(r->prediction_mse);
  }
  s.row.median_training_loss = median(losses);
  s.row.median_prediction_mse = median(mses);
  s.row.min_prediction_mse = *std::min_element(mses.begin(), mses.end());
  s.row.max_prediction_mse = *std::max_element(mses.begin(), mses.end());

  std::vector<std::int64_t> buckets;
  for (const auto* r : ok)
    for (const auto& p : r->log) buckets.push_back(p.evaluations);
  std::sort(buckets.begin(), buckets.end());
  buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());
  for (auto b : buckets) {
    std::vector<double> v;
    for (const auto* r : ok) {
      // A run that stopped earlier keeps its final value.
      const double x = best_at(*r, b);
      if (!std::isnan(x)) v.push_back(x);
    }
    if (v.empty()) continue;
    s.envelope.push_back({b, median(v), *std::min_element(v.begin(), v.end()), *std::max_element(v.begin(), v.end())});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Output files

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string output_comment(const std::string& config_hash) {
  return std::string("# pinnevo ") + kVersion + " config_hash=" + config_hash + "\n";
}

inline constexpr const char* kConvergenceHeader = "seed,wall_seconds,evaluations,l_pde,l_ic,l_bc,total,best_total";

/// Convergence log. In deterministic (evaluation-budget) mode the
/// wall_seconds column is left empty so reruns are byte-identical.
inline std::string convergence_csv(const std::vector<RunRecord>& records, const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << output_comment(cfg.config_hash) << kConvergenceHeader << '\n';
  for (const auto& r : records) {
    for (const auto& p : r.log) {
      os << r.seed << ',' << (cfg.budget.deterministic() ? "" : format_double(p.wall_seconds)) << ','
         << p.evaluations << ',' << format_double(p.current.l_pde) << ',' << format_double(p.current.l_ic) << ','
         << format_double(p.current.l_bc) << ',' << format_double(p.current.total) << ','
         << format_double(p.best_total) << '\n';
    }
  }
  return os.str();
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json summary_json(const std::vector<RunRecord>& records, const ExperimentConfig& cfg) {
  Json seeds = Json::array();
  for (const auto& r : records) {
    Json s{{"seed", r.seed},
           {"status", r.failed ? "failed" : "ok"},
           {"evaluations", r.evaluations},
           {"training_loss", number_or_null(r.training_loss)},
           {"l_pde", number_or_null(r.final_breakdown.l_pde)},
           {"l_ic", number_or_null(r.final_breakdown.l_ic)},
           {"l_bc", number_or_null(r.final_breakdown.l_bc)},
           {"prediction_mse", number_or_null(r.prediction_mse)}};
    if (r.failed) s["error"] = r.error;
    if (!cfg.budget.deterministic()) s["elapsed_seconds"] = r.elapsed;
    seeds.push_back(s);
  }
  Json out{{"pinnevo_version", kVersion},
           {"config_hash", cfg.config_hash},
           {"problem", std::string(to_string(cfg.problem))},
           {"optimizer", std::string(to_string(cfg.optimizer.algorithm))},
           {"param_count", param_count(cfg.spec)},
           {"budget", {{"wall_seconds", cfg.budget.wall_seconds}, {"max_evaluations", cfg.budget.max_evaluations}}},
           {"runs", seeds}};
  try {
    const Summary s = aggregate(records, cfg.problem, cfg.optimizer.algorithm);
    out["table"] = {{"seeds", s.row.seeds},
                    {"median_training_loss", s.row.median_training_loss},
                    {"median_prediction_mse", s.row.median_prediction_mse},
                    {"min_prediction_mse", s.row.min_prediction_mse},
                    {"max_prediction_mse", s.row.max_prediction_mse}};
    Json env = Json::array();
    for (const auto& e : s.envelope)
      env.push_back({{"evaluations", e.evaluations}, {"median", e.median}, {"min", e.min}, {"max", e.max}});
    out["envelope"] = env;
  } catch (const std::runtime_error&) {
    out["table"] = nullptr;
  }
  return out;
}

inline Json timing_json(const std::vector<RunRecord>& records, const ExperimentConfig& cfg) {
  Json runs = Json::array();
  for (const auto& r : records) {
    Json wall = Json::array();
    for (const auto& p : r.log) wall.push_back({{"evaluations", p.evaluations}, {"wall_seconds", p.wall_seconds}});
    runs.push_back({{"seed", r.seed}, {"elapsed_seconds", r.elapsed}, {"evaluations", r.evaluations}, {"log", wall}});
  }
  return Json{{"config_hash", cfg.config_hash}, {"host", host_description()}, {"runs", runs}};
}

inline constexpr const char* kReportHeader =
    "problem,optimizer,seeds,median_training_loss,median_prediction_mse,min_prediction_mse,max_prediction_mse";

inline std::string report_line(const SummaryRow& r) {
  return r.problem + ',' + r.optimizer + ',' + std::to_string(r.seeds) + ',' + format_double(r.median_training_loss) +
         ',' + format_double(r.median_prediction_mse) + ',' + format_double(r.min_prediction_mse) + ',' +
         format_double(r.max_prediction_mse);
}

/// Predictions of the best parameters on the truth grid.
inline Field prediction_field(const Mlp& mlp, const ParamVector& params, const Field& truth) {
  Field f = truth;
  f.provenance = "prediction";
  f.scheme = "network";
  const Eigen::MatrixXd pred = mlp.forward_batch(params, truth.inputs());
  f.values.assign(pred.data(), pred.data() + pred.size());
  return f;
}

/// Writes convergence.csv, summary.json, timing.json, and per-seed
/// prediction fields and checkpoints into `dir`.
inline void write_outputs(const std::filesystem::path& dir, const std::vector<RunRecord>& records,
                          const ExperimentConfig& cfg, const Field& truth) {
  std::filesystem::create_directories(dir);
  io::write_atomic(dir / "convergence.csv", convergence_csv(records, cfg));
  io::write_atomic(dir / "summary.json", summary_json(records, cfg).dump(2) + "\n");
  io::write_atomic(dir / "timing.json", timing_json(records, cfg).dump(2) + "\n");
  const Mlp mlp(cfg.spec);
  for (const auto& r : records) {
    if (r.failed) continue;
    const std::string tag = "seed" + std::to_string(r.seed);
    const Json extra{{"config_hash", cfg.config_hash}, {"seed", r.seed}};
    save_truth(prediction_field(mlp, r.best_params, truth), dir / ("prediction_" + tag + ".pinnfield"), extra);
    save_checkpoint({cfg.spec, r.seed, r.best_params, extra}, dir / ("checkpoint_" + tag + ".ckpt"));
  }
}

}  // namespace pinnevo
