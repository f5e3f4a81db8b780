#pragma once

// The five benchmark problems: parameters, residuals, collocation, and the
// assembled training loss.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pinnevo/autodiff.hpp"
#include "pinnevo/mlp.hpp"
#include "pinnevo/rng.hpp"

namespace pinnevo {

enum class ProblemId { ConvectionDiffusion, Projectile, KdV, LinearizedBurgers, NonlinearBurgers };

inline constexpr std::array<ProblemId, 5> kAllProblems{ProblemId::ConvectionDiffusion, ProblemId::Projectile,
                                                       ProblemId::KdV, ProblemId::LinearizedBurgers,
                                                       ProblemId::NonlinearBurgers};

inline std::string_view to_string(ProblemId id) {
  switch (id) {
    case ProblemId::ConvectionDiffusion: return "convection-diffusion";
    case ProblemId::Projectile: return "projectile";
    case ProblemId::KdV: return "kdv";
    case ProblemId::LinearizedBurgers: return "linear-burgers";
    case ProblemId::NonlinearBurgers: return "nonlinear-burgers";
  }
  return "?";
}

inline std::string valid_problem_ids() {
  std::string s;
  for (auto id : kAllProblems) s += (s.empty() ? "" : ", ") + std::string(to_string(id));
  return s;
}

inline ProblemId parse_problem_id(std::string_view name) {
  for (auto id : kAllProblems)
    if (to_string(id) == name) return id;
  throw std::invalid_argument("unknown problem id '" + std::string(name) + "' (valid: " + valid_problem_ids() + ")");
}

/// Named constants; each problem reads the subset it needs.
struct ProblemParams {
  // convection-diffusion
  double v = 6.0;
  double k = 1.0;
  // projectile
  double g = 3.7;
  double V0 = 10.0;
  double alpha0 = 80.0;  // degrees
  double x0 = 0.0;
  double y0 = 2.0;
  // KdV / Burgers
  double v1 = 1.0;
  double v2 = 0.001;
  double c1 = 0.3;
  double c2 = 0.1;
  double x1 = 0.4;
  double x2 = 0.8;
  double m = 10.0;
  double k_gauss = 2.0;

  double a1() const { return 0.5 * std::sqrt(c1 / v2); }
  double a2() const { return 0.5 * std::sqrt(c2 / v2); }
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool contains(double x, double tol = 1e-12) const { return x >= lo - tol && x <= hi + tol; }
};

struct LossWeights {
  double pde = 1.0;
  double ic = 1.0;
  double bc = 1.0;
};

struct ProblemDef {
  ProblemId id = ProblemId::ConvectionDiffusion;
  ProblemParams params;
  Interval space;  // spatial domain (unused by projectile)
  Interval time;   // time domain (unused by convection-diffusion)
  LossWeights weights;

  bool has_space() const { return id != ProblemId::Projectile; }
  bool has_time() const { return id != ProblemId::ConvectionDiffusion; }
  /// Spatio-temporal PDEs taking (x, t) inputs.
  bool is_pde() const { return has_space() && has_time(); }
  int input_dim() const { return is_pde() ? 2 : 1; }
  int output_dim() const { return id == ProblemId::Projectile ? 2 : 1; }
  /// Constraint term kind: boundary for convection-diffusion, initial otherwise.
  bool constraints_are_boundary() const { return id == ProblemId::ConvectionDiffusion; }
  /// Input index of x and t (-1 if absent).
  int x_coord() const { return has_space() ? 0 : -1; }
  int t_coord() const { return id == ProblemId::Projectile ? 0 : (is_pde() ? 1 : -1); }
};

inline ProblemDef make_problem(ProblemId id) {
  ProblemDef p;
  p.id = id;
  switch (id) {
    case ProblemId::ConvectionDiffusion:
      p.space = {0.0, 1.0};
      break;
    case ProblemId::Projectile:
      p.time = {0.0, 5.5};
      break;
    case ProblemId::KdV:
      p.params.v1 = 1.0;
      p.params.v2 = 0.001;
      p.space = {0.0, 1.5};
      p.time = {0.0, 2.0};
      break;
    case ProblemId::LinearizedBurgers:
      p.params.v1 = 1.0;
      p.params.v2 = 0.02;
      p.params.k_gauss = 2.0;
      p.params.m = 10.0;
      p.space = {-1.5, 4.5};
      p.time = {0.0, 2.0};
      break;
    case ProblemId::NonlinearBurgers:
      // Viscosity is carried in v1 to match the residual's coefficient naming.
      p.params.v1 = 0.001;
      p.params.k_gauss = 2.0;
      p.params.m = 1.0;
      p.space = {-2.0, 2.0};
      p.time = {0.0, 2.0};
      break;
  }
  return p;
}

inline ProblemDef make_problem(std::string_view name) { return make_problem(parse_problem_id(name)); }

/// Default network topology per problem.
inline MlpSpec default_spec(ProblemId id) {
  switch (id) {
    case ProblemId::ConvectionDiffusion: return {1, {10, 10, 10}, {HeadSpec{{}, 1}}};
    case ProblemId::Projectile: return {1, {8, 8}, {HeadSpec{{8}, 1}, HeadSpec{{8}, 1}}};
    case ProblemId::KdV: return {2, {8, 8, 8, 8}, {HeadSpec{{}, 1}}};
    case ProblemId::LinearizedBurgers: return {2, {10, 10, 10}, {HeadSpec{{}, 1}}};
    case ProblemId::NonlinearBurgers: return {2, {8, 8, 8}, {HeadSpec{{}, 1}}};
  }
  throw std::logic_error("unreachable");
}

/// Projectile launch velocity components.
inline std::array<double, 2> launch_velocity(const ProblemParams& p) {
  const double a = p.alpha0 * std::numbers::pi / 180.0;
  return {p.V0 * std::cos(a), p.V0 * std::sin(a)};
}

/// u(x, t = 0) for the time-dependent PDEs.
inline double initial_condition(const ProblemDef& problem, double x) {
  const auto& p = problem.params;
  switch (problem.id) {
    case ProblemId::KdV: {
      const double s1 = 1.0 / std::cosh(p.a1() * (x - p.x1));
      const double s2 = 1.0 / std::cosh(p.a2() * (x - p.x2));
      return 3.0 * p.c1 * s1 * s1 + 3.0 * p.c2 * s2 * s2;
    }
    case ProblemId::LinearizedBurgers:
    case ProblemId::NonlinearBurgers: {
      const double kx = p.k_gauss * x;
      return p.m * std::exp(-kx * kx);
    }
    case ProblemId::ConvectionDiffusion:
      throw std::invalid_argument("convection-diffusion is steady and has no initial condition");
    case ProblemId::Projectile:
      throw std::invalid_argument("projectile initial state is not a spatial profile; use projectile_initial_state");
  }
  throw std::logic_error("unreachable");
}

/// (x, y, x_t, y_t) at t = 0.
inline std::array<double, 4> projectile_initial_state(const ProblemParams& p) {
  const auto vel = launch_velocity(p);
  return {p.x0, p.y0, vel[0], vel[1]};
}

// Residual expressions, generic over double and Eigen arrays.
namespace residual {

template <class T>
auto convection_diffusion(const ProblemParams& p, const T& ux, const T& uxx) {
  return p.v * ux - p.k * uxx;
}
template <class T>
auto kdv(const ProblemParams& p, const T& u, const T& ut, const T& ux, const T& uxxx) {
  return ut + p.v1 * u * ux + p.v2 * uxxx;
}
template <class T>
auto linearized_burgers(const ProblemParams& p, const T& ut, const T& ux, const T& uxx) {
  return ut + p.v1 * ux - p.v2 * uxx;
}
template <class T>
auto nonlinear_burgers(const ProblemParams& p, const T& u, const T& ut, const T& ux, const T& uxx) {
  return ut + u * ux - p.v1 * uxx;
}

}  // namespace residual

/// Jets of each network output at one point, along x and along t.
struct PointJets {
  std::vector<Jet> x;  // per output, empty if not supplied
  std::vector<Jet> t;
  int x_order = -1;
  int t_order = -1;

  double value(std::size_t output = 0) const {
    if (output < x.size()) return x[output].value;
    if (output < t.size()) return t[output].value;
    throw std::invalid_argument("jets do not carry output " + std::to_string(output));
  }
  double dx(int k, std::size_t output = 0) const {
    if (k > x_order || output >= x.size())
      throw std::invalid_argument("x-derivative of order " + std::to_string(k) + " missing");
    return x[output].derivative(k);
  }
  double dt(int k, std::size_t output = 0) const {
    if (k > t_order || output >= t.size())
      throw std::invalid_argument("t-derivative of order " + std::to_string(k) + " missing");
    return t[output].derivative(k);
  }
};

/// Jets the residual of `problem` needs: (x order, t order), -1 when unused.
inline std::pair<int, int> required_orders(ProblemId id) {
  switch (id) {
    case ProblemId::ConvectionDiffusion: return {2, -1};
    case ProblemId::Projectile: return {-1, 2};
    case ProblemId::KdV: return {3, 1};
    case ProblemId::LinearizedBurgers: return {2, 1};
    case ProblemId::NonlinearBurgers: return {2, 1};
  }
  throw std::logic_error("unreachable");
}

/// Signed residual components at one point (two for projectile: x_tt and
/// y_tt + g; one otherwise).
inline std::vector<double> pde_residual(const ProblemDef& problem, const PointJets& j) {
  const auto& p = problem.params;
  switch (problem.id) {
    case ProblemId::ConvectionDiffusion:
      return {residual::convection_diffusion(p, j.dx(1), j.dx(2))};
    case ProblemId::Projectile:
      return {j.dt(2, 0), j.dt(2, 1) + p.g};
    case ProblemId::KdV:
      return {residual::kdv(p, j.value(), j.dt(1), j.dx(1), j.dx(3))};
    case ProblemId::LinearizedBurgers:
      return {residual::linearized_burgers(p, j.dt(1), j.dx(1), j.dx(2))};
    case ProblemId::NonlinearBurgers:
      return {residual::nonlinear_burgers(p, j.value(), j.dt(1), j.dx(1), j.dx(2))};
  }
  throw std::logic_error("unreachable");
}

/// Jets of the network at `point` with the orders the residual needs.
inline PointJets point_jets(const ProblemDef& problem, const Mlp& mlp, const ParamVector& params,
                            const Eigen::VectorXd& point) {
  const auto [xo, to] = required_orders(problem.id);
  PointJets j;
  if (xo >= 0) {
    j.x = eval_jets(mlp, params, point, problem.x_coord(), xo);
    j.x_order = xo;
  }
  if (to >= 0) {
    j.t = eval_jets(mlp, params, point, problem.t_coord(), to);
    j.t_order = to;
  }
  return j;
}

/// Interior points and constraint (IC/BC) points with their targets. Points
/// are columns; `targets` has one row per constraint term (4 for projectile:
/// x, y, x_t, y_t; 1 otherwise).
struct CollocationSet {
  Eigen::MatrixXd interior;
  Eigen::MatrixXd constraint;
  Eigen::MatrixXd targets;

  Index size() const { return interior.cols() + constraint.cols(); }
};

enum class SamplingMode { Grid, Random };

struct CollocationOptions {
  SamplingMode mode = SamplingMode::Grid;
  Index total = 0;  // 1-D problems: total points including constraint points
  Index nx = 0;     // PDEs: spatial grid size (also the IC count)
  Index nt = 201;   // PDEs: time levels including t = 0
};

inline CollocationOptions default_collocation(ProblemId id) {
  switch (id) {
    case ProblemId::ConvectionDiffusion: return {SamplingMode::Random, 10000, 0, 0};
    case ProblemId::Projectile: return {SamplingMode::Grid, 10000, 0, 0};
    case ProblemId::KdV: return {SamplingMode::Grid, 0, 77, 201};
    case ProblemId::LinearizedBurgers: return {SamplingMode::Grid, 0, 193, 201};
    case ProblemId::NonlinearBurgers: return {SamplingMode::Grid, 0, 129, 201};
  }
  throw std::logic_error("unreachable");
}

namespace detail {

inline void sort_columns(Eigen::MatrixXd& pts, Eigen::MatrixXd* targets = nullptr) {
  std::vector<Index> order(static_cast<std::size_t>(pts.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&pts](Index a, Index b) {
    for (Index r = 0; r < pts.rows(); ++r) {
      if (pts(r, a) < pts(r, b)) return true;
      if (pts(r, a) > pts(r, b)) return false;
    }
    return false;
  });
  Eigen::MatrixXd sorted(pts.rows(), pts.cols());
  Eigen::MatrixXd sorted_targets;
  if (targets) sorted_targets.resize(targets->rows(), targets->cols());
  for (Index i = 0; i < pts.cols(); ++i) {
    sorted.col(i) = pts.col(order[i]);
    if (targets) sorted_targets.col(i) = targets->col(order[i]);
  }
  pts = std::move(sorted);
  if (targets) *targets = std::move(sorted_targets);
}

inline bool columns_sorted(const Eigen::MatrixXd& pts) {
  for (Index i = 1; i < pts.cols(); ++i) {
    for (Index r = 0; r < pts.rows(); ++r) {
      if (pts(r, i - 1) < pts(r, i)) break;
      if (pts(r, i - 1) > pts(r, i)) return false;
    }
  }
  return true;
}

inline double grid_point(const Interval& iv, Index i, Index n) {
  if (n == 1) return iv.lo;
  if (i == n - 1) return iv.hi;
  return iv.lo + (iv.hi - iv.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

}  // namespace detail

/// Sorts interior and constraint points lexicographically so loss reductions
/// do not depend on the order points were supplied in.
inline void canonicalize(CollocationSet& set) {
  detail::sort_columns(set.interior);
  detail::sort_columns(set.constraint, &set.targets);
}

inline bool is_canonical(const CollocationSet& set) {
  return detail::columns_sorted(set.interior) && detail::columns_sorted(set.constraint);
}

/// Targets for constraint points of `problem`.
inline Eigen::MatrixXd constraint_targets(const ProblemDef& problem, const Eigen::MatrixXd& points) {
  const Index n = points.cols();
  if (problem.id == ProblemId::Projectile) {
    const auto s = projectile_initial_state(problem.params);
    Eigen::MatrixXd t(4, n);
    for (Index i = 0; i < n; ++i) t.col(i) << s[0], s[1], s[2], s[3];
    return t;
  }
  Eigen::MatrixXd t(1, n);
  for (Index i = 0; i < n; ++i) {
    const double x = points(0, i);
    t(0, i) = problem.id == ProblemId::ConvectionDiffusion
                  ? (std::abs(x - problem.space.lo) < std::abs(x - problem.space.hi) ? 0.0 : 1.0)
                  : initial_condition(problem, x);
  }
  return t;
}

inline CollocationSet sample_collocation(const ProblemDef& problem, RngSeed seed, CollocationOptions opts) {
  CollocationSet set;
  Rng rng(derive_seed(seed.value, 0xC011));
  if (!problem.is_pde()) {
    const Interval dom = problem.has_space() ? problem.space : problem.time;
    const Index nconstraint = problem.id == ProblemId::ConvectionDiffusion ? 2 : 1;
    if (opts.total <= nconstraint) throw std::invalid_argument("too few collocation points");
    const Index ninterior = opts.total - nconstraint;
    set.interior.resize(1, ninterior);
    for (Index i = 0; i < ninterior; ++i) {
      if (opts.mode == SamplingMode::Random) {
        set.interior(0, i) = rng.uniform(dom.lo, dom.hi);
      } else if (problem.id == ProblemId::ConvectionDiffusion) {
        // Interior nodes of an inclusive grid whose end nodes are the BCs.
        set.interior(0, i) = detail::grid_point(dom, i + 1, opts.total);
      } else {
        // Grid nodes after t = 0, which is the IC point.
        set.interior(0, i) = detail::grid_point(dom, i + 1, opts.total);
      }
    }
    if (problem.id == ProblemId::ConvectionDiffusion) {
      set.constraint.resize(1, 2);
      set.constraint << dom.lo, dom.hi;
    } else {
      set.constraint.resize(1, 1);
      set.constraint << dom.lo;
    }
  } else {
    const Index nx = opts.nx;
    const Index nt = opts.nt;
    if (nx < 2 || nt < 2) throw std::invalid_argument("grid needs nx >= 2 and nt >= 2");
    set.interior.resize(2, nx * (nt - 1));
    set.constraint.resize(2, nx);
    Index col = 0;
    for (Index i = 0; i < nx; ++i) {
      const double x = opts.mode == SamplingMode::Grid ? detail::grid_point(problem.space, i, nx)
                                                       : rng.uniform(problem.space.lo, problem.space.hi);
      set.constraint.col(i) << x, problem.time.lo;
    }
    for (Index i = 0; i < nx; ++i) {
      for (Index j = 1; j < nt; ++j) {
        if (opts.mode == SamplingMode::Grid) {
          set.interior.col(col++) << detail::grid_point(problem.space, i, nx), detail::grid_point(problem.time, j, nt);
        } else {
          const double x = rng.uniform(problem.space.lo, problem.space.hi);
          const double t = rng.uniform(problem.time.lo, problem.time.hi);
          set.interior.col(col++) << x, t;
        }
      }
    }
  }
  set.targets = constraint_targets(problem, set.constraint);
  canonicalize(set);
  return set;
}

inline CollocationSet sample_collocation(const ProblemDef& problem, RngSeed seed) {
  return sample_collocation(problem, seed, default_collocation(problem.id));
}

/// Subset of a collocation set (columns picked by index, order kept).
inline CollocationSet select(const CollocationSet& set, const std::vector<Index>& interior,
                             const std::vector<Index>& constraint) {
  CollocationSet out;
  out.interior.resize(set.interior.rows(), static_cast<Index>(interior.size()));
  out.constraint.resize(set.constraint.rows(), static_cast<Index>(constraint.size()));
  out.targets.resize(set.targets.rows(), static_cast<Index>(constraint.size()));
  for (std::size_t i = 0; i < interior.size(); ++i) out.interior.col(static_cast<Index>(i)) = set.interior.col(interior[i]);
  for (std::size_t i = 0; i < constraint.size(); ++i) {
    out.constraint.col(static_cast<Index>(i)) = set.constraint.col(constraint[i]);
    out.targets.col(static_cast<Index>(i)) = set.targets.col(constraint[i]);
  }
  return out;
}

struct LossBreakdown {
  double l_pde = 0.0;
  double l_ic = 0.0;
  double l_bc = 0.0;
  double total = 0.0;
};

inline double combine(const LossWeights& w, double l_pde, double l_ic, double l_bc) {
  return w.pde * l_pde + w.ic * l_ic + w.bc * l_bc;
}

/// Training loss of one network on one problem. Evaluation with and without
/// the gradient share the same forward path, so loss values agree bit for bit.
///
/// L_PDE is the mean over interior points of the squared residual (summed over
/// components for projectile). The constraint term is the mean over constraint
/// points of the summed squared term violations; with the default point sets
/// this is exactly 1/2 of the two-point BC sum for convection-diffusion and
/// the plain four-term IC sum for projectile.
class PinnLoss {
 public:
  PinnLoss(ProblemDef problem, const Mlp& mlp)
      : problem_(std::move(problem)),
        mlp_(&mlp),
        interior_engine_(mlp, interior_plan(problem_)),
        constraint_engine_(mlp, constraint_plan(problem_)) {
    if (mlp.input_dim() != problem_.input_dim())
      throw std::invalid_argument("network input dimension does not match problem");
    if (mlp.output_dim() != problem_.output_dim())
      throw std::invalid_argument("network output dimension does not match problem");
  }

  const ProblemDef& problem() const { return problem_; }
  const Mlp& mlp() const { return *mlp_; }

  LossBreakdown operator()(const ParamVector& params, const CollocationSet& set) const {
    return evaluate(params, set, nullptr);
  }

  LossBreakdown with_grad(const ParamVector& params, const CollocationSet& set, ParamVector& grad) const {
    grad.setZero(params.size());
    return evaluate(params, set, &grad);
  }

 private:
  static JetPlan interior_plan(const ProblemDef& p) {
    const auto [xo, to] = required_orders(p.id);
    std::vector<JetDirection> dirs;
    if (xo > 0) dirs.push_back({p.x_coord(), xo});
    if (to > 0) dirs.push_back({p.t_coord(), to});
    return JetPlan(dirs);
  }
  static JetPlan constraint_plan(const ProblemDef& p) {
    if (p.id == ProblemId::Projectile) return JetPlan({{p.t_coord(), 1}});
    return JetPlan();
  }

  LossBreakdown evaluate(const ParamVector& params, const CollocationSet& given, ParamVector* grad) const {
    std::optional<CollocationSet> sorted;
    if (!is_canonical(given)) {
      sorted = given;
      canonicalize(*sorted);
    }
    const CollocationSet& set = sorted ? *sorted : given;
    LossBreakdown lb;
    const auto& w = problem_.weights;
    if (set.interior.cols() > 0) {
      const double n = static_cast<double>(set.interior.cols());
      const double adj_scale = 2.0 * w.pde / n;
      lb.l_pde = interior_engine_.accumulate(
                     params, set.interior,
                     [&](const ChunkChannels& out, ChunkChannels* adj) { return pde_chunk(out, adj, adj_scale); }, grad) /
                 n;
    }
    if (set.constraint.cols() > 0) {
      const double n = static_cast<double>(set.constraint.cols());
      const double lambda = problem_.constraints_are_boundary() ? w.bc : w.ic;
      const double adj_scale = 2.0 * lambda / n;
      const double l = constraint_engine_.accumulate(
                           params, set.constraint,
                           [&](const ChunkChannels& out, ChunkChannels* adj) {
                             return constraint_chunk(out, adj, set.targets, adj_scale);
                           },
                           grad) /
                       n;
      (problem_.constraints_are_boundary() ? lb.l_bc : lb.l_ic) = l;
    }
    lb.total = combine(w, lb.l_pde, lb.l_ic, lb.l_bc);
    return lb;
  }

  double pde_chunk(const ChunkChannels& out, ChunkChannels* adj, double scale) const {
    const auto& p = problem_.params;
    const JetPlan& plan = interior_engine_.plan();
    const int xc = problem_.x_coord();
    const int tc = problem_.t_coord();
    switch (problem_.id) {
      case ProblemId::ConvectionDiffusion: {
        const int c1 = plan.channel(xc, 1), c2 = plan.channel(xc, 2);
        const Eigen::ArrayXXd r = residual::convection_diffusion(p, out.row(0, c1), out.row(0, c2));
        if (adj) {
          const Eigen::ArrayXXd g = scale * r;
          adj->row(0, c1) += p.v * g;
          adj->row(0, c2) += -p.k * g;
        }
        return r.square().sum();
      }
      case ProblemId::Projectile: {
        const int c2 = plan.channel(tc, 2);
        const Eigen::ArrayXXd rx = out.row(0, c2);
        const Eigen::ArrayXXd ry = out.row(1, c2) + p.g;
        if (adj) {
          adj->row(0, c2) += scale * rx;
          adj->row(1, c2) += scale * ry;
        }
        return (rx.square() + ry.square()).sum();
      }
      case ProblemId::KdV: {
        const int cx1 = plan.channel(xc, 1), cx3 = plan.channel(xc, 3), ct1 = plan.channel(tc, 1);
        const auto u = out.row(0, 0);
        const auto ux = out.row(0, cx1);
        const Eigen::ArrayXXd r = residual::kdv(p, u, out.row(0, ct1), ux, out.row(0, cx3));
        if (adj) {
          const Eigen::ArrayXXd g = scale * r;
          adj->row(0, ct1) += g;
          adj->row(0, 0) += g * p.v1 * ux;
          adj->row(0, cx1) += g * p.v1 * u;
          adj->row(0, cx3) += p.v2 * g;
        }
        return r.square().sum();
      }
      case ProblemId::LinearizedBurgers: {
        const int cx1 = plan.channel(xc, 1), cx2 = plan.channel(xc, 2), ct1 = plan.channel(tc, 1);
        const Eigen::ArrayXXd r = residual::linearized_burgers(p, out.row(0, ct1), out.row(0, cx1), out.row(0, cx2));
        if (adj) {
          const Eigen::ArrayXXd g = scale * r;
          adj->row(0, ct1) += g;
          adj->row(0, cx1) += p.v1 * g;
          adj->row(0, cx2) += -p.v2 * g;
        }
        return r.square().sum();
      }
      case ProblemId::NonlinearBurgers: {
        const int cx1 = plan.channel(xc, 1), cx2 = plan.channel(xc, 2), ct1 = plan.channel(tc, 1);
        const auto u = out.row(0, 0);
        const auto ux = out.row(0, cx1);
        const Eigen::ArrayXXd r = residual::nonlinear_burgers(p, u, out.row(0, ct1), ux, out.row(0, cx2));
        if (adj) {
          const Eigen::ArrayXXd g = scale * r;
          adj->row(0, ct1) += g;
          adj->row(0, 0) += g * ux;
          adj->row(0, cx1) += g * u;
          adj->row(0, cx2) += -p.v1 * g;
        }
        return r.square().sum();
      }
    }
    throw std::logic_error("unreachable");
  }

  double constraint_chunk(const ChunkChannels& out, ChunkChannels* adj, const Eigen::MatrixXd& targets,
                          double scale) const {
    const Index first = out.first();
    const Index n = out.size();
    if (problem_.id == ProblemId::Projectile) {
      const int ct1 = constraint_engine_.plan().channel(problem_.t_coord(), 1);
      // Rows of targets: x, y, x_t, y_t.
      const std::array<std::pair<Index, int>, 4> terms{{{0, 0}, {1, 0}, {0, ct1}, {1, ct1}}};
      double sum = 0.0;
      for (std::size_t k = 0; k < terms.size(); ++k) {
        const auto [output, channel] = terms[k];
        const Eigen::ArrayXXd d =
            out.row(output, channel) - targets.block(static_cast<Index>(k), first, 1, n).array();
        if (adj) adj->row(output, channel) += scale * d;
        sum += d.square().sum();
      }
      return sum;
    }
    const Eigen::ArrayXXd d = out.row(0, 0) - targets.block(0, first, 1, n).array();
    if (adj) adj->row(0, 0) += scale * d;
    return d.square().sum();
  }

  ProblemDef problem_;
  const Mlp* mlp_;
  JetEngine interior_engine_;
  JetEngine constraint_engine_;
};

inline LossBreakdown pinn_loss(const ProblemDef& problem, const Mlp& mlp, const ParamVector& params,
                               const CollocationSet& set) {
  return PinnLoss(problem, mlp)(params, set);
}

inline LossBreakdown loss_grad(const ProblemDef& problem, const Mlp& mlp, const ParamVector& params,
                               const CollocationSet& set, ParamVector& grad) {
  if (set.size() == 0) throw std::invalid_argument("empty batch");
  return PinnLoss(problem, mlp).with_grad(params, set, grad);
}

}  // namespace pinnevo
