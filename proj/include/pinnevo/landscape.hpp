#pragma once

// Loss-landscape diagnostics: Hessian spectra and 2-D loss surfaces for the
// physics-informed loss and for a plain supervised (DNN) loss.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pinnevo/autodiff.hpp"
#include "pinnevo/io.hpp"
#include "pinnevo/oracles.hpp"
#include "pinnevo/problems.hpp"

namespace pinnevo {

struct EigenPairs {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
  double min_value = 0.0;   // smallest algebraic eigenvalue of the whole spectrum
};

/// Top-k eigenpairs (largest algebraic) of a symmetric matrix.
inline EigenPairs principal_directions(const Eigen::MatrixXd& hessian, Index k) {
  const Index n = hessian.rows();
  if (hessian.cols() != n) throw std::invalid_argument("Hessian must be square");
  if (k < 0 || k > n) throw std::invalid_argument("k must lie in [0, dimension]");
  EigenPairs out;
  out.values.resize(k);
  out.vectors.resize(n, k);
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (hessian + hessian.transpose()));
  if (es.info() != Eigen::Success) throw std::runtime_error("Hessian eigendecomposition failed");
  // Eigen returns ascending order.
  for (Index i = 0; i < k; ++i) {
    out.values[i] = es.eigenvalues()[n - 1 - i];
    out.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  out.min_value = es.eigenvalues()[0];
  return out;
}

/// Same, with the Hessian formed from `grad_fn(params) -> Eigen::VectorXd`.
template <class GradFn>
EigenPairs principal_directions(GradFn&& grad_fn, const ParamVector& params, Index k, HessianOptions opts = {}) {
  return principal_directions(hessian(std::forward<GradFn>(grad_fn), params, opts), k);
}

/// Inputs with known outputs for the supervised loss.
struct LabeledSet {
  Eigen::MatrixXd inputs;   // input_dim x n
  Eigen::MatrixXd targets;  // output_dim x n
};

/// Labels every collocation point (interior and constraint) of `set` with the
/// closed-form solution, or with `truth` interpolated when given.
inline LabeledSet label_points(const ProblemDef& problem, const CollocationSet& set, const Field* truth = nullptr) {
  LabeledSet ls;
  const Index n = set.interior.cols() + set.constraint.cols();
  ls.inputs.resize(problem.input_dim(), n);
  ls.inputs << set.interior, set.constraint;
  ls.targets.resize(problem.output_dim(), n);
  for (Index i = 0; i < n; ++i) {
    const auto pt = ls.inputs.col(i);
    if (truth != nullptr) {
      const double x = problem.has_space() ? pt[problem.x_coord()] : 0.0;
      const double t = problem.has_time() ? pt[problem.t_coord()] : 0.0;
      for (int c = 0; c < truth->components; ++c) ls.targets(c, i) = truth->interpolate(x, t, c);
      continue;
    }
    switch (problem.id) {
      case ProblemId::ConvectionDiffusion: ls.targets(0, i) = analytic_convection_diffusion(problem.params, pt[0]); break;
      case ProblemId::Projectile: {
        const auto xy = analytic_projectile(problem.params, pt[0]);
        ls.targets(0, i) = xy[0];
        ls.targets(1, i) = xy[1];
        break;
      }
      case ProblemId::LinearizedBurgers:
        ls.targets(0, i) = analytic_linearized_burgers(problem.params, pt[0], pt[1]);
        break;
      default:
        throw std::invalid_argument(std::string(to_string(problem.id)) +
                                    " has no closed form; supply a truth field for labels");
    }
  }
  return ls;
}

/// Mean squared error of the network over a labeled set (averaged over
/// points and outputs); fills `grad` when given.
inline double dnn_loss(const Mlp& mlp, const ParamVector& params, const LabeledSet& data, ParamVector* grad = nullptr) {
  const Index n = data.inputs.cols();
  if (n == 0) throw std::invalid_argument("dnn_loss needs at least one labeled point");
  if (data.targets.rows() != mlp.output_dim() || data.targets.cols() != n)
    throw std::invalid_argument("label shape does not match network");
  const double denom = static_cast<double>(n * mlp.output_dim());
  if (grad) grad->setZero(params.size());
  JetEngine engine(mlp, JetPlan());
  const double sum = engine.accumulate(
      params, data.inputs,
      [&](const ChunkChannels& out, ChunkChannels* adj) {
        double s = 0.0;
        for (Index o = 0; o < mlp.output_dim(); ++o) {
          const Eigen::ArrayXXd d = out.row(o, 0) - data.targets.block(o, out.first(), 1, out.size()).array();
          if (adj) adj->row(o, 0) += (2.0 / denom) * d;
          s += d.square().sum();
        }
        return s;
      },
      grad);
  return sum / denom;
}

struct SurfaceGrid {
  ParamVector center;
  ParamVector dir1, dir2;
  std::vector<double> alphas, betas;
  Eigen::MatrixXd losses;  // losses(i, j) at center + alphas[i] dir1 + betas[j] dir2
};

/// Evaluates `loss_fn(params) -> double` on a (2r+1)^2 grid spanning
/// +-half_width along two orthonormal directions.
template <class LossFn>
SurfaceGrid surface(LossFn&& loss_fn, const ParamVector& center, const ParamVector& dir1, const ParamVector& dir2,
                    double half_width, Index resolution) {
  if (dir1.size() != center.size() || dir2.size() != center.size())
    throw std::invalid_argument("surface directions must match the parameter dimension");
  if (std::abs(dir1.norm() - 1.0) > 1e-8 || std::abs(dir2.norm() - 1.0) > 1e-8 || std::abs(dir1.dot(dir2)) > 1e-10)
    throw std::invalid_argument("surface directions must be orthonormal");
  if (resolution < 0 || !(half_width >= 0.0)) throw std::invalid_argument("bad surface extent");
  SurfaceGrid g{center, dir1, dir2, {}, {}, {}};
  const Index m = 2 * resolution + 1;
  for (Index i = 0; i < m; ++i) {
    const double c = resolution == 0 ? 0.0 : half_width * static_cast<double>(i - resolution) / resolution;
    g.alphas.push_back(c);
    g.betas.push_back(c);
  }
  g.losses.resize(m, m);
  ParamVector p(center.size());
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      if (i == resolution && j == resolution) {
        p = center;
      } else {
        p = center + g.alphas[i] * dir1 + g.betas[j] * dir2;
      }
      g.losses(i, j) = loss_fn(std::as_const(p));
    }
  }
  return g;
}

inline std::string surface_csv(const SurfaceGrid& g, const std::string& comment = "") {
  std::ostringstream os;
  os.precision(17);
  if (!comment.empty()) os << "# " << comment << '\n';
  os << "alpha,beta,loss\n";
  for (std::size_t i = 0; i < g.alphas.size(); ++i)
    for (std::size_t j = 0; j < g.betas.size(); ++j)
      os << g.alphas[i] << ',' << g.betas[j] << ',' << g.losses(static_cast<Index>(i), static_cast<Index>(j)) << '\n';
  return os.str();
}

enum class ModelKind { Pinn, Dnn };
enum class Phase { Init, Trained };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::Pinn ? "pinn" : "dnn"; }
inline std::string_view to_string(Phase p) { return p == Phase::Init ? "init" : "trained"; }

struct SpectrumReport {
  std::vector<double> top_eigenvalues;  // descending
  double min_eigenvalue = 0.0;
  ModelKind model = ModelKind::Pinn;
  Phase phase = Phase::Init;
  std::uint64_t seed = 0;

  /// Whether a negative value shows up among the computed extremes (top-k and minimum).
  bool has_negative() const {
    return min_eigenvalue < 0.0 ||
           std::any_of(top_eigenvalues.begin(), top_eigenvalues.end(), [](double v) { return v < 0.0; });
  }
};

inline Json to_json(const SpectrumReport& r) {
  return Json{{"model", std::string(to_string(r.model))},
              {"phase", std::string(to_string(r.phase))},
              {"seed", r.seed},
              {"top_eigenvalues", r.top_eigenvalues},
              {"min_eigenvalue", r.min_eigenvalue}};
}

/// Everything the landscape analyses need for one (problem, network, params).
class LandscapeProbe {
 public:
  LandscapeProbe(const ProblemDef& problem, const MlpSpec& spec, RngSeed colloc_seed, const Field* truth = nullptr)
      : problem_(problem),
        mlp_(spec),
        loss_(problem, mlp_),
        set_(sample_collocation(problem, colloc_seed)),
        labels_(label_points(problem, set_, truth)) {}

  const Mlp& mlp() const { return mlp_; }
  const CollocationSet& collocation() const { return set_; }
  const LabeledSet& labels() const { return labels_; }

  double loss(ModelKind kind, const ParamVector& w) const {
    return kind == ModelKind::Pinn ? loss_(w, set_).total : dnn_loss(mlp_, w, labels_);
  }

  Eigen::VectorXd gradient(ModelKind kind, const ParamVector& w) const {
    ParamVector g;
    if (kind == ModelKind::Pinn) {
      loss_.with_grad(w, set_, g);
    } else {
      g.resize(w.size());
      dnn_loss(mlp_, w, labels_, &g);
    }
    return g;
  }

  EigenPairs spectrum(ModelKind kind, const ParamVector& w, Index k) const {
    return principal_directions([&](const ParamVector& p) { return gradient(kind, p); }, w, k);
  }

  SpectrumReport report(ModelKind kind, Phase phase, const ParamVector& w, Index k, std::uint64_t seed,
                        EigenPairs* pairs = nullptr) const {
    EigenPairs ep = spectrum(kind, w, k);
    SpectrumReport r;
    r.top_eigenvalues.assign(ep.values.data(), ep.values.data() + ep.values.size());
    r.min_eigenvalue = ep.min_value;
    r.model = kind;
    r.phase = phase;
    r.seed = seed;
    if (pairs) *pairs = std::move(ep);
    return r;
  }

 private:
  ProblemDef problem_;
  Mlp mlp_;
  PinnLoss loss_;
  CollocationSet set_;
  LabeledSet labels_;
};

/// For each seed: Xavier-initialize the network and report the top-2 Hessian
/// eigenvalues of the PINN loss and of the DNN loss at that point. The seed
/// also draws the collocation set.
inline std::vector<std::pair<SpectrumReport, SpectrumReport>> init_spectrum_experiment(
    const ProblemDef& problem, const MlpSpec& spec, const std::vector<std::uint64_t>& seeds, Index k = 2) {
  std::vector<std::pair<SpectrumReport, SpectrumReport>> out;
  for (auto seed : seeds) {
    LandscapeProbe probe(problem, spec, RngSeed{seed});
    const ParamVector w = xavier_init(spec, RngSeed{seed});
    out.emplace_back(probe.report(ModelKind::Pinn, Phase::Init, w, k, seed),
                     probe.report(ModelKind::Dnn, Phase::Init, w, k, seed));
  }
  return out;
}

}  // namespace pinnevo
