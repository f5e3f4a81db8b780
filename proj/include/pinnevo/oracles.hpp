#pragma once

// Ground-truth fields: closed forms where they exist, otherwise a
// finite-volume solver with second-order Runge-Kutta time stepping.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinnevo/io.hpp"
#include "pinnevo/problems.hpp"

namespace pinnevo {

/// Values on a tensor grid of (t, x) with `components` values per node.
/// Layout is t-major: values[(it * nx + ix) * components + c]. A problem
/// without a spatial (or temporal) axis leaves that axis empty.
struct Field {
  ProblemId problem = ProblemId::ConvectionDiffusion;
  std::vector<double> x;
  std::vector<double> t;
  int components = 1;
  std::vector<double> values;
  std::string provenance = "analytic";  // "analytic" or "simulated"
  std::string scheme = "closed-form";
  double dx = 0.0;
  double dt = 0.0;

  Index nx() const { return static_cast<Index>(x.size()); }
  Index nt() const { return static_cast<Index>(t.size()); }
  Index nodes() const { return std::max<Index>(nx(), 1) * std::max<Index>(nt(), 1); }

  double at(Index it, Index ix, int c = 0) const {
    return values[static_cast<std::size_t>((it * std::max<Index>(nx(), 1) + ix) * components + c)];
  }
  double& at(Index it, Index ix, int c = 0) {
    return values[static_cast<std::size_t>((it * std::max<Index>(nx(), 1) + ix) * components + c)];
  }

  /// Grid nodes as network inputs: input_dim x nodes, in storage order.
  Eigen::MatrixXd inputs() const {
    const Index n = nodes();
    const bool both = !x.empty() && !t.empty();
    Eigen::MatrixXd pts(both ? 2 : 1, n);
    Index col = 0;
    for (Index it = 0; it < std::max<Index>(nt(), 1); ++it) {
      for (Index ix = 0; ix < std::max<Index>(nx(), 1); ++ix) {
        if (both) {
          pts.col(col++) << x[ix], t[it];
        } else {
          pts(0, col++) = x.empty() ? t[it] : x[ix];
        }
      }
    }
    return pts;
  }

  /// Node values as output_dim x nodes, matching inputs().
  Eigen::MatrixXd targets() const {
    return Eigen::Map<const Eigen::MatrixXd>(values.data(), components, nodes());
  }

  /// Piecewise-linear interpolation (clamped at the grid edges).
  double interpolate(double xq, double tq, int c = 0) const {
    auto bracket = [](const std::vector<double>& axis, double q) -> std::pair<Index, double> {
      if (axis.size() < 2) return {0, 0.0};
      if (q <= axis.front()) return {0, 0.0};
      if (q >= axis.back()) return {static_cast<Index>(axis.size()) - 2, 1.0};
      const auto it = std::upper_bound(axis.begin(), axis.end(), q);
      const Index i = static_cast<Index>(it - axis.begin()) - 1;
      return {i, (q - axis[i]) / (axis[i + 1] - axis[i])};
    };
    const auto [ix, fx] = bracket(x, xq);
    const auto [it, ft] = bracket(t, tq);
    const Index ix1 = x.size() < 2 ? ix : ix + 1;
    const Index it1 = t.size() < 2 ? it : it + 1;
    const double lo = (1 - fx) * at(it, ix, c) + fx * at(it, ix1, c);
    const double hi = (1 - fx) * at(it1, ix, c) + fx * at(it1, ix1, c);
    return (1 - ft) * lo + ft * hi;
  }

  bool operator==(const Field&) const = default;
};

// ---------------------------------------------------------------------------
// Closed forms

/// Steady convection-diffusion with u(0) = 0, u(1) = 1.
inline double analytic_convection_diffusion(const ProblemParams& p, double x) {
  return std::expm1(p.v * x / p.k) / std::expm1(p.v / p.k);
}

inline std::array<double, 2> analytic_projectile(const ProblemParams& p, double t) {
  const auto vel = launch_velocity(p);
  return {p.x0 + vel[0] * t, p.y0 + vel[1] * t - 0.5 * p.g * t * t};
}

/// Advected, diffusing Gaussian solving u_t + v1 u_x - v2 u_xx = 0 from
/// u(x, 0) = m exp(-(k x)^2).
inline double analytic_linearized_burgers(const ProblemParams& p, double x, double t) {
  const double spread = 1.0 + 4.0 * p.k_gauss * p.k_gauss * p.v2 * t;
  const double xi = x - p.v1 * t;
  return p.m / std::sqrt(spread) * std::exp(-p.k_gauss * p.k_gauss * xi * xi / spread);
}

/// Travelling KdV soliton of speed c starting at x0 (for u_t + v1 u u_x + v2 u_xxx = 0).
inline double kdv_soliton(const ProblemParams& p, double c, double x0, double x, double t) {
  const double s = 1.0 / std::cosh(0.5 * std::sqrt(c / p.v2) * (x - x0 - c * t));
  return 3.0 * c / p.v1 * s * s;
}

inline std::vector<double> linspace(double lo, double hi, Index n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) v[i] = detail::grid_point({lo, hi}, i, n);
  return v;
}

/// Closed-form field on an inclusive uniform grid of n nodes.
inline Field analytic_field(const ProblemDef& problem, Index n) {
  if (n < 2) throw std::invalid_argument("analytic grid needs at least 2 nodes");
  Field f;
  f.problem = problem.id;
  f.provenance = "analytic";
  f.scheme = "closed-form";
  switch (problem.id) {
    case ProblemId::ConvectionDiffusion:
      f.x = linspace(problem.space.lo, problem.space.hi, n);
      for (double xv : f.x) f.values.push_back(analytic_convection_diffusion(problem.params, xv));
      f.dx = f.x[1] - f.x[0];
      return f;
    case ProblemId::Projectile:
      f.t = linspace(problem.time.lo, problem.time.hi, n);
      f.components = 2;
      for (double tv : f.t) {
        const auto xy = analytic_projectile(problem.params, tv);
        f.values.push_back(xy[0]);
        f.values.push_back(xy[1]);
      }
      f.dt = f.t[1] - f.t[0];
      return f;
    default:
      throw std::invalid_argument(std::string(to_string(problem.id)) + " has no closed-form solution; simulate it");
  }
}

// ---------------------------------------------------------------------------
// Finite-volume solver

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverConfig {
  Index nx = 1024;
  double cfl = 0.4;
  bool limiter = true;
  double end_time = 2.0;
  Index snapshots = 201;  // stored time levels including t = 0
  /// Fourth-difference damping for dispersive problems, as a multiple of the
  /// amount that keeps RK2 stable on the central u_xxx stencil.
  double dispersion_damping = 2.0;
  /// Ghost-cell values u(x, t); unset means zero-gradient extrapolation.
  std::function<double(double, double)> boundary;
};

struct SolverStats {
  Index steps = 0;
  double dt = 0.0;
};

namespace fv {

enum class Flux { Linear, Quadratic };

struct Equation {
  Flux flux = Flux::Linear;
  double advection = 0.0;   // a in a*u or a*u^2/2
  double diffusion = 0.0;   // coefficient of -u_xx
  double dispersion = 0.0;  // coefficient of +u_xxx
};

inline Equation equation_for(const ProblemDef& p) {
  switch (p.id) {
    case ProblemId::KdV: return {Flux::Quadratic, p.params.v1, 0.0, p.params.v2};
    case ProblemId::LinearizedBurgers: return {Flux::Linear, p.params.v1, p.params.v2, 0.0};
    case ProblemId::NonlinearBurgers: return {Flux::Quadratic, 1.0, p.params.v1, 0.0};
    default: throw std::invalid_argument(std::string(to_string(p.id)) + " is not a time-dependent PDE");
  }
}

/// Upwind-biased (Fromm) face value bounded by the universal limiter in
/// normalized-variable form: inside monotone regions the normalized face value
/// is clipped to [u~_C, min(1, u~_C / courant)], elsewhere it falls back to the
/// upwind cell value.
inline double face_value(double up, double centre, double down, double courant, bool limit) {
  const double high = centre + 0.25 * (down - up);
  if (!limit) return high;
  const double span = down - up;
  if (std::abs(span) <= 1e-300) return centre;
  const double nc = (centre - up) / span;
  if (!(nc > 0.0 && nc < 1.0)) return centre;
  const double upper = courant > 0.0 ? std::min(1.0, nc / courant) : 1.0;
  const double nf = std::clamp((high - up) / span, nc, upper);
  return up + nf * span;
}

class Solver {
 public:
  Solver(const Equation& eq, double dx, bool limiter) : eq_(eq), dx_(dx), limiter_(limiter) {}

  void set_damping(double nu4) { damping_ = nu4; }

  /// du/dt for interior cells; `u` holds kGhost ghost cells on each side.
  void rhs(const std::vector<double>& u, double dt, std::vector<double>& out, std::vector<double>& flux) const {
    const Index n = static_cast<Index>(u.size()) - 2 * kGhost;
    flux.resize(static_cast<std::size_t>(n + 1));
    const double* c = u.data() + kGhost;  // c[i] is cell i, valid for i in [-2, n+1]
    const double inv_dx = 1.0 / dx_;
    const double inv_dx2 = inv_dx * inv_dx;
    const double inv_dx3 = inv_dx2 * inv_dx;
    for (Index f = 0; f <= n; ++f) {
      // Face f separates cells f-1 and f.
      const double ul = c[f - 1];
      const double ur = c[f];
      const double speed = eq_.flux == Flux::Linear ? eq_.advection : eq_.advection * 0.5 * (ul + ur);
      const double courant = std::abs(speed) * dt * inv_dx;
      const double uf = speed >= 0.0 ? face_value(c[f - 2], ul, ur, courant, limiter_)
                                     : face_value(c[f + 1], ur, ul, courant, limiter_);
      double F = eq_.flux == Flux::Linear ? eq_.advection * uf : eq_.advection * 0.5 * uf * uf;
      if (eq_.diffusion != 0.0) F -= eq_.diffusion * (ur - ul) * inv_dx;
      if (eq_.dispersion != 0.0) F += eq_.dispersion * 0.5 * (c[f + 1] - ur - ul + c[f - 2]) * inv_dx2;
      if (damping_ != 0.0) F += damping_ * (c[f + 1] - 3.0 * ur + 3.0 * ul - c[f - 2]) * inv_dx3;
      flux[f] = F;
    }
    out.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out[i] = -(flux[i + 1] - flux[i]) * inv_dx;
  }

  static constexpr Index kGhost = 2;

  /// Zero-gradient ghost cells.
  static void fill_ghosts(std::vector<double>& u) {
    const std::size_t n = u.size() - 2 * kGhost;
    for (Index g = 0; g < kGhost; ++g) {
      u[g] = u[kGhost];
      u[kGhost + n + g] = u[kGhost + n - 1];
    }
  }

  static void fill_ghosts(std::vector<double>& u, const std::function<double(double, double)>& bc, double lo,
                          double dx, double t) {
    if (!bc) return fill_ghosts(u);
    const Index n = static_cast<Index>(u.size()) - 2 * kGhost;
    for (Index g = 1; g <= kGhost; ++g) {
      u[kGhost - g] = bc(lo + (0.5 - static_cast<double>(g)) * dx, t);
      u[kGhost + n - 1 + g] = bc(lo + (static_cast<double>(n - 1 + g) + 0.5) * dx, t);
    }
  }

 private:
  Equation eq_;
  double dx_;
  bool limiter_;
  double damping_ = 0.0;
};

}  // namespace fv

/// Integrates a time-dependent problem from its initial condition with an
/// SSP (Heun) second-order Runge-Kutta method on a uniform cell-centred grid.
inline Field simulate(const ProblemDef& problem, const SolverConfig& cfg, SolverStats* stats = nullptr) {
  const fv::Equation eq = fv::equation_for(problem);
  if (cfg.nx < 16) throw std::invalid_argument("solver needs nx >= 16");
  if (!(cfg.cfl > 0.0 && cfg.cfl <= 1.0)) throw std::invalid_argument("cfl must lie in (0, 1]");
  if (cfg.snapshots < 2 || !(cfg.end_time > 0.0)) throw std::invalid_argument("need >= 2 snapshots and end_time > 0");

  const Index nx = cfg.nx;
  const double dx = (problem.space.hi - problem.space.lo) / static_cast<double>(nx);
  constexpr Index g = fv::Solver::kGhost;

  Field field;
  field.problem = problem.id;
  field.provenance = "simulated";
  field.scheme = std::string("fv-fromm-") + (cfg.limiter ? "ultimate" : "unlimited") + "-ssprk2";
  field.dx = dx;
  field.x.resize(static_cast<std::size_t>(nx));
  for (Index i = 0; i < nx; ++i) field.x[i] = problem.space.lo + (static_cast<double>(i) + 0.5) * dx;
  field.t = linspace(problem.time.lo, problem.time.lo + cfg.end_time, cfg.snapshots);

  std::vector<double> u(static_cast<std::size_t>(nx + 2 * g));
  double umax = 0.0;
  for (Index i = 0; i < nx; ++i) {
    u[g + i] = initial_condition(problem, field.x[i]);
    umax = std::max(umax, std::abs(u[g + i]));
  }

  // Largest stable step; nonlinear speeds get headroom over the initial maximum.
  double dt_max = std::numeric_limits<double>::infinity();
  const double speed = eq.flux == fv::Flux::Linear ? std::abs(eq.advection) : 1.5 * std::abs(eq.advection) * umax;
  if (speed > 0.0) dt_max = std::min(dt_max, cfg.cfl * dx / speed);
  if (eq.diffusion > 0.0) dt_max = std::min(dt_max, cfg.cfl * dx * dx / (2.0 * eq.diffusion));
  if (eq.dispersion != 0.0) dt_max = std::min(dt_max, cfg.cfl * dx * dx * dx / (4.0 * std::abs(eq.dispersion)));
  const double interval = cfg.end_time / static_cast<double>(cfg.snapshots - 1);
  const double steps_per_interval = std::isfinite(dt_max) ? std::ceil(interval / dt_max) : 1.0;
  if (steps_per_interval > 1e9) throw SolverError("time step underflow: dt would be below " + std::to_string(interval / 1e9));
  const Index substeps = static_cast<Index>(steps_per_interval);
  const double dt = interval / static_cast<double>(substeps);
  field.dt = dt;

  fv::Solver solver(eq, dx, cfg.limiter);
  if (eq.dispersion != 0.0 && cfg.dispersion_damping > 0.0) {
    // RK2 amplifies imaginary-axis modes by about 1 + Y^4/8 per step; a fourth
    // difference supplying at least that much decay at every wavenumber
    // restores stability. max_theta sin^4(theta) sin^4(theta/2) = 256/729.
    const double y = std::abs(eq.dispersion) * dt / (dx * dx * dx);
    const double minimal = 2.0 * (256.0 / 729.0) * std::pow(y, 4) * std::pow(dx, 4) / dt;
    solver.set_damping(cfg.dispersion_damping * minimal);
  }

  field.values.assign(static_cast<std::size_t>(nx * cfg.snapshots), 0.0);
  auto store = [&](Index it) {
    for (Index i = 0; i < nx; ++i) field.at(it, i) = u[g + i];
  };
  store(0);

  std::vector<double> k1, k2, stage(u.size()), flux;
  Index steps = 0;
  for (Index it = 1; it < cfg.snapshots; ++it) {
    for (Index s = 0; s < substeps; ++s) {
      const double t = field.t[it - 1] + static_cast<double>(s) * dt;
      fv::Solver::fill_ghosts(u, cfg.boundary, problem.space.lo, dx, t);
      solver.rhs(u, dt, k1, flux);
      for (Index i = 0; i < nx; ++i) stage[g + i] = u[g + i] + dt * k1[i];
      fv::Solver::fill_ghosts(stage, cfg.boundary, problem.space.lo, dx, t + dt);
      solver.rhs(stage, dt, k2, flux);
      for (Index i = 0; i < nx; ++i) u[g + i] = 0.5 * u[g + i] + 0.5 * (stage[g + i] + dt * k2[i]);
      ++steps;
    }
    double m = 0.0;
    for (Index i = 0; i < nx; ++i) m = std::max(m, std::abs(u[g + i]));
    if (!std::isfinite(m) || m > 1e6 * std::max(1.0, umax)) {
      throw SolverError("solver became unstable before t = " + std::to_string(field.t[it]) + " (step " +
                        std::to_string(steps) + ", dt = " + std::to_string(dt) + ", max|u| = " + std::to_string(m) +
                        ")");
    }
    store(it);
  }
  if (stats) *stats = {steps, dt};
  return field;
}

// ---------------------------------------------------------------------------
// .pinnfield files: container header {"kind":"field","problem_id",...}; the
// payload is the x axis, then the t axis, then the values in storage order.

inline Json field_header(const Field& f) {
  Json domain = Json::object();
  if (!f.x.empty()) domain["x"] = {f.x.front(), f.x.back()};
  if (!f.t.empty()) domain["t"] = {f.t.front(), f.t.back()};
  return Json{{"kind", "field"},
              {"problem_id", std::string(to_string(f.problem))},
              {"provenance", f.provenance},
              {"scheme", f.scheme},
              {"nx", f.nx()},
              {"nt", f.nt()},
              {"components", f.components},
              {"dx", f.dx},
              {"dt", f.dt},
              {"domain", domain},
              {"layout", "t-major"},
              {"version", kVersion}};
}

inline std::string encode_field(const Field& f, const Json& extra = Json::object()) {
  std::vector<double> payload;
  payload.reserve(f.x.size() + f.t.size() + f.values.size());
  payload.insert(payload.end(), f.x.begin(), f.x.end());
  payload.insert(payload.end(), f.t.begin(), f.t.end());
  payload.insert(payload.end(), f.values.begin(), f.values.end());
  Json header = field_header(f);
  for (auto it = extra.begin(); it != extra.end(); ++it) header[it.key()] = it.value();
  return io::encode_container(header, payload);
}

inline void save_truth(const Field& f, const std::filesystem::path& path, const Json& extra = Json::object()) {
  io::write_atomic(path, encode_field(f, extra));
}

inline Field decode_field(const std::string& bytes) {
  auto c = io::decode_container(bytes);
  const auto& h = c.header;
  if (h.value("kind", "") != "field") throw FormatError("not a field file", 0);
  Field f;
  try {
    f.problem = parse_problem_id(h.at("problem_id").get<std::string>());
    f.provenance = h.at("provenance").get<std::string>();
    f.scheme = h.at("scheme").get<std::string>();
    f.components = h.at("components").get<int>();
    f.dx = h.at("dx").get<double>();
    f.dt = h.at("dt").get<double>();
    const auto nx = h.at("nx").get<std::size_t>();
    const auto nt = h.at("nt").get<std::size_t>();
    const std::size_t nvalues = std::max<std::size_t>(nx, 1) * std::max<std::size_t>(nt, 1) *
                                static_cast<std::size_t>(f.components);
    if (c.payload.size() != nx + nt + nvalues) throw FormatError("payload size does not match header", 0);
    f.x.assign(c.payload.begin(), c.payload.begin() + static_cast<std::ptrdiff_t>(nx));
    f.t.assign(c.payload.begin() + static_cast<std::ptrdiff_t>(nx),
               c.payload.begin() + static_cast<std::ptrdiff_t>(nx + nt));
    f.values.assign(c.payload.begin() + static_cast<std::ptrdiff_t>(nx + nt), c.payload.end());
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad field header: ") + e.what(), 0);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad field header: ") + e.what(), 0);
  }
  return f;
}

/// Loads a field and checks it belongs to `expected`.
inline Field load_truth(ProblemId expected, const std::filesystem::path& path) {
  Field f = decode_field(io::read_file(path));
  if (f.problem != expected)
    throw std::invalid_argument("field in " + path.string() + " is for problem '" + std::string(to_string(f.problem)) +
                                "', expected '" + std::string(to_string(expected)) + "'");
  return f;
}

}  // namespace pinnevo
