#pragma once

// Finite-difference checks shared by the unit tests and the acceptance run.
//
// Derivatives are compared against five-point central differences of the next
// lower derivative (value for d1, d1 for d2, d2 for d3), step h = 1e-3 *
// max(1, |x|). Relative error is |a - b| / max(|a|, |b|, floor).

#include <algorithm>
#include <cmath>

#include "pinnevo/optimizers.hpp"
#include "pinnevo/problems.hpp"

namespace pinnevo::test {

inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <class F>
double central5(F&& f, double h) {
  return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h);
}

inline Eigen::VectorXd random_point(const ProblemDef& p, Rng& rng) {
  Eigen::VectorXd x(p.input_dim());
  if (p.has_space()) x[p.x_coord()] = rng.uniform(p.space.lo, p.space.hi);
  if (p.has_time()) x[p.t_coord()] = rng.uniform(p.time.lo, p.time.hi);
  return x;
}

/// Largest relative error of scalar jets (orders 1..3, every input coordinate
/// and output) against finite differences over `pairs` random (params, point)
/// draws for the problem's default network.
inline double jet_fd_error(ProblemId id, int pairs, std::uint64_t seed) {
  const ProblemDef p = make_problem(id);
  const MlpSpec spec = default_spec(id);
  const Mlp mlp(spec);
  Rng rng(RngSeed{seed});
  double worst = 0.0;
  for (int k = 0; k < pairs; ++k) {
    // Inflate Xavier draws a little so the tanh units leave the linear regime.
    const ParamVector w = (1.0 + rng.uniform()) * xavier_init(spec, RngSeed{rng.below(1u << 30)});
    const Eigen::VectorXd x = random_point(p, rng);
    for (int c = 0; c < p.input_dim(); ++c) {
      const double h = 1e-3 * std::max(1.0, std::abs(x[c]));
      const auto jets = eval_jets(mlp, w, x, c, 3);
      for (Index o = 0; o < mlp.output_dim(); ++o) {
        for (int order = 1; order <= 3; ++order) {
          auto lower = [&](double dx) {
            Eigen::VectorXd y = x;
            y[c] += dx;
            return eval_jets(mlp, w, y, c, 3)[static_cast<std::size_t>(o)].derivative(order - 1);
          };
          const double fd = central5(lower, h);
          worst = std::max(worst, rel_error(jets[static_cast<std::size_t>(o)].derivative(order), fd));
        }
      }
    }
  }
  return worst;
}

/// Largest relative error of the loss gradient projected on `dirs` random unit
/// directions against central differences of the loss.
inline double grad_fd_error(ProblemId id, int dirs, std::uint64_t seed) {
  const ProblemDef p = make_problem(id);
  const MlpSpec spec = default_spec(id);
  const Mlp mlp(spec);
  const PinnLoss loss(p, mlp);
  const CollocationSet set = sample_collocation(p, RngSeed{seed});
  Rng rng(RngSeed{derive_seed(seed, 77)});
  const ParamVector w = xavier_init(spec, RngSeed{seed});
  ParamVector g;
  const double l0 = loss.with_grad(w, set, g).total;
  double worst = 0.0;
  for (int k = 0; k < dirs; ++k) {
    ParamVector v(w.size());
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    v.normalize();
    const double fd = central5([&](double s) { return loss(w + s * v, set).total; }, 1e-3);
    worst = std::max(worst, rel_error(g.dot(v), fd, 1e-8 * std::max(1.0, l0)));
  }
  return worst;
}

// Plain xNES with a full shape matrix:
//   mu <- mu + eta_mu sigma B G_delta
//   sigma <- sigma exp(eta_sigma / 2 G_sigma)
//   B <- B exp(eta_B / 2 G_B)
struct CanonicalXnes {
  CanonicalXnes(const Eigen::VectorXd& m, double s, double eta_mu, Index lambda, RngSeed seed)
      : rng(seed), mu(m), sigma(s), eta_mu(eta_mu) {
    const Index d = m.size();
    eta_sigma = eta_b = xnes_default_rate(d);
    B = Eigen::MatrixXd::Identity(d, d);
    u = xnes_utilities(lambda);
    z.resize(d, lambda);
  }

  Eigen::MatrixXd ask() {
    fill_normal(z, rng);
    Eigen::MatrixXd x = (B * z) * sigma;
    x.colwise() += mu;
    return x;
  }

  void tell(const std::vector<double>& f) {
    const Index d = mu.size(), lambda = z.cols();
    const auto order = rank_order(f);
    Eigen::VectorXd w(lambda);
    for (Index k = 0; k < lambda; ++k) w[order[k]] = u[k];
    const Eigen::VectorXd g_delta = z * w;
    Eigen::MatrixXd g_m = z * w.asDiagonal() * z.transpose();
    g_m.diagonal().array() -= w.sum();
    const double g_sigma = g_m.trace() / static_cast<double>(d);
    Eigen::MatrixXd g_b = g_m;
    g_b.diagonal().array() -= g_sigma;
    mu = mu + eta_mu * (sigma * (B * g_delta));
    sigma *= std::exp(0.5 * eta_sigma * g_sigma);
    B = B * symmetric_expm(0.5 * eta_b * g_b);
  }

  Rng rng;
  Eigen::VectorXd mu, u;
  double sigma, eta_mu, eta_sigma = 0, eta_b = 0;
  Eigen::MatrixXd B, z;
};

}  // namespace pinnevo::test
