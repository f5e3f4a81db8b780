#pragma once

// Ask-tell optimizers over flat parameter vectors: CMA-ES, xNES with Nesterov
// momentum on the mean, and (mini)batch gradient descent.

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pinnevo/mlp.hpp"
#include "pinnevo/rng.hpp"

namespace pinnevo {

enum class Algorithm { CmaEs, XnesNag, Sgd, BatchGd };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::CmaEs: return "cma-es";
    case Algorithm::XnesNag: return "xnes-nag";
    case Algorithm::Sgd: return "sgd";
    case Algorithm::BatchGd: return "batch-gd";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::CmaEs, Algorithm::XnesNag, Algorithm::Sgd, Algorithm::BatchGd})
    if (to_string(a) == name) return a;
  throw std::invalid_argument("unknown algorithm '" + std::string(name) +
                              "' (valid: cma-es, xnes-nag, sgd, batch-gd)");
}

inline bool is_evolutionary(Algorithm a) { return a == Algorithm::CmaEs || a == Algorithm::XnesNag; }

/// Misuse of the ask/tell alternation or mismatched tell arguments.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct CmaEsParams {
  Index pop_size = 0;  // 0 selects 4 + floor(3 ln n)
  double sigma0 = 0.05;
};

struct XnesParams {
  Index pop_size = 0;      // 0 selects 4 + floor(3 ln n)
  double lr = 1.0;         // mean learning rate
  double sigma0 = 1e-3;
  double momentum = 0.9;   // Nesterov coefficient on the mean
  double lr_sigma = 0.0;   // 0 selects (9 + 3 ln d) / (5 d sqrt(d))
  double lr_shape = 0.0;   // same default as lr_sigma
};

struct SgdParams {
  Index batch_interior = 100;
  Index batch_constraint = 1;
  double lr = 1e-3;
};

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::CmaEs;
  CmaEsParams cma;
  XnesParams xnes;
  SgdParams sgd;
};

inline Index default_population(Index n) {
  return 4 + static_cast<Index>(std::floor(3.0 * std::log(static_cast<double>(n))));
}

inline void validate(const OptimizerConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  switch (c.algorithm) {
    case Algorithm::CmaEs:
      if (c.cma.pop_size != 0 && c.cma.pop_size < 2) fail("cma-es pop_size must be >= 2");
      if (!(c.cma.sigma0 > 0.0)) fail("cma-es sigma0 must be positive");
      break;
    case Algorithm::XnesNag:
      if (c.xnes.pop_size != 0 && c.xnes.pop_size < 2) fail("xnes-nag pop_size must be >= 2");
      if (!(c.xnes.sigma0 > 0.0)) fail("xnes-nag sigma0 must be positive");
      if (!(c.xnes.lr > 0.0)) fail("xnes-nag lr must be positive");
      if (!(c.xnes.momentum >= 0.0 && c.xnes.momentum < 1.0)) fail("xnes-nag momentum must lie in [0, 1)");
      if (c.xnes.lr_sigma < 0.0 || c.xnes.lr_shape < 0.0) fail("xnes-nag rates must be non-negative");
      break;
    case Algorithm::Sgd:
    case Algorithm::BatchGd:
      if (!(c.sgd.lr > 0.0)) fail(std::string(to_string(c.algorithm)) + " lr must be positive");
      if (c.algorithm == Algorithm::Sgd && (c.sgd.batch_interior < 1 || c.sgd.batch_constraint < 0))
        fail("sgd batch sizes must be positive");
      break;
  }
}

/// Indices into a collocation set's interior and constraint points.
struct Minibatch {
  std::vector<Index> interior;
  std::vector<Index> constraint;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;

  virtual Algorithm algorithm() const = 0;
  Index dimension() const { return dim_; }
  Index iteration() const { return iteration_; }

  /// Candidates to evaluate, one per column.
  const Eigen::MatrixXd& ask() {
    if (asked_) throw ProtocolError("ask called twice without tell");
    do_ask();
    asked_ = true;
    return candidates_;
  }

  /// Reports fitness per candidate, in ask order. Gradient methods also need
  /// the gradient of the (minibatch) loss at each candidate.
  void tell(const std::vector<double>& fitness, const Eigen::MatrixXd* gradients = nullptr) {
    if (!asked_) throw ProtocolError("tell called without a pending ask");
    if (static_cast<Index>(fitness.size()) != candidates_.cols())
      throw ProtocolError("tell received " + std::to_string(fitness.size()) + " fitness values for " +
                          std::to_string(candidates_.cols()) + " candidates");
    if (needs_gradient()) {
      if (!gradients || gradients->rows() != dim_ || gradients->cols() != candidates_.cols())
        throw ProtocolError("tell needs one gradient per candidate for gradient methods");
    }
    do_tell(fitness, gradients);
    asked_ = false;
    ++iteration_;
  }

  bool awaiting_tell() const { return asked_; }
  virtual bool needs_gradient() const { return false; }
  /// Points the pending candidates must be evaluated on; empty means the full set.
  virtual std::optional<Minibatch> batch() const { return std::nullopt; }
  /// Centre of the search distribution, or the current iterate.
  virtual const ParamVector& incumbent() const = 0;
  virtual double step_size() const { return 0.0; }

 protected:
  explicit Optimizer(Index dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("optimizer dimension must be positive");
  }
  virtual void do_ask() = 0;
  virtual void do_tell(const std::vector<double>& fitness, const Eigen::MatrixXd* gradients) = 0;

  Eigen::MatrixXd candidates_;
  Index dim_;
  Index iteration_ = 0;
  bool asked_ = false;
};

/// Ranking used by both evolution strategies: ascending fitness, non-finite
/// values last, ties by ask order.
inline std::vector<Index> rank_order(const std::vector<double>& fitness) {
  std::vector<Index> order(fitness.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const bool fa = std::isfinite(fitness[a]), fb = std::isfinite(fitness[b]);
    if (fa != fb) return fa;
    return fa && fitness[a] < fitness[b];
  });
  return order;
}

inline void fill_normal(Eigen::MatrixXd& z, Rng& rng) {
  for (Index j = 0; j < z.cols(); ++j)
    for (Index i = 0; i < z.rows(); ++i) z(i, j) = rng.normal();
}

// ---------------------------------------------------------------------------

class CmaEs final : public Optimizer {
 public:
  CmaEs(const ParamVector& mean, const CmaEsParams& p, RngSeed seed)
      : Optimizer(mean.size()), rng_(seed), mean_(mean), sigma_(p.sigma0) {
    const Index n = dim_;
    const double nd = static_cast<double>(n);
    lambda_ = p.pop_size > 0 ? p.pop_size : default_population(n);
    mu_ = lambda_ / 2;
    weights_.resize(mu_);
    for (Index i = 0; i < mu_; ++i)
      weights_[i] = std::log((static_cast<double>(lambda_) + 1.0) / 2.0) - std::log(static_cast<double>(i + 1));
    weights_ /= weights_.sum();
    mueff_ = 1.0 / weights_.squaredNorm();

    cs_ = (mueff_ + 2.0) / (nd + mueff_ + 5.0);
    ds_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (nd + 1.0)) - 1.0) + cs_;
    cc_ = (4.0 + mueff_ / nd) / (nd + 4.0 + 2.0 * mueff_ / nd);
    c1_ = 2.0 / ((nd + 1.3) * (nd + 1.3) + mueff_);
    cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((nd + 2.0) * (nd + 2.0) + mueff_));
    chin_ = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

    ps_ = Eigen::VectorXd::Zero(n);
    pc_ = Eigen::VectorXd::Zero(n);
    C_ = Eigen::MatrixXd::Identity(n, n);
    B_ = Eigen::MatrixXd::Identity(n, n);
    D_ = Eigen::VectorXd::Ones(n);
    BD_ = Eigen::MatrixXd::Identity(n, n);
    z_.resize(n, lambda_);
  }

  Algorithm algorithm() const override { return Algorithm::CmaEs; }
  const ParamVector& incumbent() const override { return mean_; }
  double step_size() const override { return sigma_; }

  Index population() const { return lambda_; }
  const Eigen::MatrixXd& covariance() const { return C_; }
  const Eigen::VectorXd& path_sigma() const { return ps_; }
  const Eigen::VectorXd& path_c() const { return pc_; }
  /// Times an eigenvalue of C had to be raised to the floor.
  Index repairs() const { return repairs_; }
  Index evaluations() const { return evals_; }

  static constexpr double kEigenFloor = 1e-14;

 private:
  void do_ask() override {
    fill_normal(z_, rng_);
    candidates_ = (BD_ * z_) * sigma_;
    candidates_.colwise() += mean_;
  }

  void do_tell(const std::vector<double>& fitness, const Eigen::MatrixXd*) override {
    const Index n = dim_;
    evals_ += lambda_;
    const auto order = rank_order(fitness);

    const Eigen::VectorXd old = mean_;
    Eigen::MatrixXd y(n, mu_);  // selected steps (x - m_old) / sigma
    for (Index i = 0; i < mu_; ++i) y.col(i) = (candidates_.col(order[i]) - old) / sigma_;
    const Eigen::VectorXd yw = y * weights_;
    mean_ = old + sigma_ * yw;

    // C^{-1/2} yw = B D^{-1} B^T yw
    const Eigen::VectorXd inv_sqrt_yw = B_ * ((B_.transpose() * yw).array() / D_.array()).matrix();
    ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * inv_sqrt_yw;
    const double gen = static_cast<double>(evals_) / static_cast<double>(lambda_);
    const double ps_norm = ps_.norm();
    const bool hsig = ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs_, 2.0 * gen)) / chin_ <
                      1.4 + 2.0 / (static_cast<double>(n) + 1.0);
    pc_ = (1.0 - cc_) * pc_ + (hsig ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * yw;

    const double c1a = c1_ * (1.0 - (hsig ? 0.0 : cc_ * (2.0 - cc_)));
    C_ *= 1.0 - c1a - cmu_;
    C_.noalias() += c1_ * pc_ * pc_.transpose();
    C_.noalias() += cmu_ * (y * weights_.asDiagonal() * y.transpose());

    sigma_ *= std::exp((cs_ / ds_) * (ps_norm / chin_ - 1.0));
    if (!std::isfinite(sigma_) || sigma_ <= 0.0) throw std::runtime_error("cma-es step size degenerated");

    if (static_cast<double>(evals_ - eigen_evals_) >
        static_cast<double>(lambda_) / (c1_ + cmu_) / static_cast<double>(n) / 10.0) {
      decompose();
    }
  }

  void decompose() {
    eigen_evals_ = evals_;
    C_ = 0.5 * (C_ + C_.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C_);
    if (es.info() != Eigen::Success) throw std::runtime_error("cma-es eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    bool repaired = false;
    for (Index i = 0; i < ev.size(); ++i) {
      if (!(ev[i] >= kEigenFloor)) {
        ev[i] = kEigenFloor;
        repaired = true;
      }
    }
    B_ = es.eigenvectors();
    if (repaired) {
      ++repairs_;
      C_ = B_ * ev.asDiagonal() * B_.transpose();
    }
    D_ = ev.cwiseSqrt();
    BD_ = B_ * D_.asDiagonal();
  }

  Rng rng_;
  Eigen::VectorXd mean_;
  double sigma_;
  Index lambda_ = 0, mu_ = 0;
  Eigen::VectorXd weights_;
  double mueff_ = 0, cs_ = 0, ds_ = 0, cc_ = 0, c1_ = 0, cmu_ = 0, chin_ = 0;
  Eigen::VectorXd ps_, pc_, D_;
  Eigen::MatrixXd C_, B_, BD_, z_;
  Index evals_ = 0, eigen_evals_ = 0, repairs_ = 0;
};

// ---------------------------------------------------------------------------

/// Rank-based fitness shaping weights of xNES (sum to zero).
inline Eigen::VectorXd xnes_utilities(Index lambda) {
  Eigen::VectorXd u(lambda);
  const double base = std::log(static_cast<double>(lambda) / 2.0 + 1.0);
  for (Index k = 0; k < lambda; ++k) u[k] = std::max(0.0, base - std::log(static_cast<double>(k + 1)));
  u /= u.sum();
  u.array() -= 1.0 / static_cast<double>(lambda);
  return u;
}

inline double xnes_default_rate(Index d) {
  const double dd = static_cast<double>(d);
  return (9.0 + 3.0 * std::log(dd)) / (5.0 * dd * std::sqrt(dd));
}

/// exp(S) for symmetric S.
inline Eigen::MatrixXd symmetric_expm(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed in matrix exponential");
  return es.eigenvectors() * es.eigenvalues().array().exp().matrix().asDiagonal() * es.eigenvectors().transpose();
}

/// xNES with the search distribution N(mu, sigma^2 B B^T), det B = 1. The
/// mean moves with Nesterov momentum: samples are drawn around the look-ahead
/// point mu + beta v, the natural-gradient mean step there feeds the velocity
/// v <- beta v + lr * step, and mu <- mu + v. Scale and shape updates are the
/// canonical ones, so beta = 0 is plain xNES.
class XnesNag final : public Optimizer {
 public:
  XnesNag(const ParamVector& mean, const XnesParams& p, RngSeed seed)
      : Optimizer(mean.size()), rng_(seed), mean_(mean), sigma_(p.sigma0), beta_(p.momentum), lr_(p.lr) {
    lambda_ = p.pop_size > 0 ? p.pop_size : default_population(dim_);
    lr_sigma_ = p.lr_sigma > 0.0 ? p.lr_sigma : xnes_default_rate(dim_);
    lr_shape_ = p.lr_shape > 0.0 ? p.lr_shape : xnes_default_rate(dim_);
    utilities_ = xnes_utilities(lambda_);
    velocity_ = Eigen::VectorXd::Zero(dim_);
    B_ = Eigen::MatrixXd::Identity(dim_, dim_);
    z_.resize(dim_, lambda_);
  }

  Algorithm algorithm() const override { return Algorithm::XnesNag; }
  const ParamVector& incumbent() const override { return mean_; }
  double step_size() const override { return sigma_; }

  Index population() const { return lambda_; }
  const Eigen::MatrixXd& shape() const { return B_; }
  const Eigen::VectorXd& velocity() const { return velocity_; }

  /// log|det B|; G_B is traceless, so this stays at zero up to rounding.
  double log_det_shape() const { return log_abs_det(B_); }

 private:
  static double log_abs_det(const Eigen::MatrixXd& m) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    return lu.matrixLU().diagonal().array().abs().log().sum();
  }

  void do_ask() override {
    fill_normal(z_, rng_);
    lookahead_ = mean_ + beta_ * velocity_;
    candidates_ = (B_ * z_) * sigma_;
    candidates_.colwise() += lookahead_;
  }

  void do_tell(const std::vector<double>& fitness, const Eigen::MatrixXd*) override {
    const Index d = dim_;
    const auto order = rank_order(fitness);
    Eigen::VectorXd u(lambda_);  // utility per candidate in ask order
    for (Index k = 0; k < lambda_; ++k) u[order[k]] = utilities_[k];

    const Eigen::VectorXd g_delta = z_ * u;
    Eigen::MatrixXd g_m = z_ * u.asDiagonal() * z_.transpose();
    g_m.diagonal().array() -= u.sum();
    const double g_sigma = g_m.trace() / static_cast<double>(d);
    Eigen::MatrixXd g_b = g_m;
    g_b.diagonal().array() -= g_sigma;

    const Eigen::VectorXd step = sigma_ * (B_ * g_delta);
    velocity_ = beta_ * velocity_ + lr_ * step;
    mean_ = mean_ + velocity_;
    sigma_ *= std::exp(0.5 * lr_sigma_ * g_sigma);
    B_ = B_ * symmetric_expm(0.5 * lr_shape_ * g_b);
    if (!std::isfinite(sigma_) || sigma_ <= 0.0) throw std::runtime_error("xnes step size degenerated");
  }

  Rng rng_;
  Eigen::VectorXd mean_, lookahead_, velocity_, utilities_;
  double sigma_, beta_, lr_;
  double lr_sigma_ = 0, lr_shape_ = 0;
  Index lambda_ = 0;
  Eigen::MatrixXd B_, z_;
};

// ---------------------------------------------------------------------------

/// Shuffled passes over an index range; each pass visits every index once.
class EpochSampler {
 public:
  EpochSampler(Index n, Rng& rng) : n_(n), rng_(&rng) {}

  std::vector<Index> next(Index k) {
    k = std::min(k, n_);
    if (cursor_ + k > static_cast<Index>(perm_.size())) reshuffle();
    std::vector<Index> out(perm_.begin() + cursor_, perm_.begin() + cursor_ + k);
    cursor_ += k;
    return out;
  }

 private:
  void reshuffle() {
    perm_.resize(static_cast<std::size_t>(n_));
    std::iota(perm_.begin(), perm_.end(), Index{0});
    for (Index i = n_ - 1; i > 0; --i) std::swap(perm_[i], perm_[rng_->below(static_cast<std::uint64_t>(i + 1))]);
    cursor_ = 0;
  }

  Index n_;
  Rng* rng_;
  std::vector<Index> perm_;
  Index cursor_ = 0;
};

/// w <- w - lr * grad. With minibatching enabled, each ask draws a batch of
/// interior and constraint points without replacement within an epoch.
class GradientDescent final : public Optimizer {
 public:
  GradientDescent(const ParamVector& start, const SgdParams& p, bool minibatch, Index n_interior,
                  Index n_constraint, RngSeed seed)
      : Optimizer(start.size()),
        rng_(seed),
        params_(start),
        p_(p),
        minibatch_(minibatch),
        interior_(n_interior, rng_),
        constraint_(n_constraint, rng_) {}

  GradientDescent(const GradientDescent&) = delete;
  GradientDescent& operator=(const GradientDescent&) = delete;

  Algorithm algorithm() const override { return minibatch_ ? Algorithm::Sgd : Algorithm::BatchGd; }
  bool needs_gradient() const override { return true; }
  const ParamVector& incumbent() const override { return params_; }
  std::optional<Minibatch> batch() const override { return minibatch_ ? std::optional(pending_) : std::nullopt; }

 private:
  void do_ask() override {
    if (minibatch_) {
      pending_.interior = interior_.next(p_.batch_interior);
      pending_.constraint = constraint_.next(p_.batch_constraint);
    }
    candidates_ = params_;
  }

  void do_tell(const std::vector<double>&, const Eigen::MatrixXd* gradients) override {
    params_ -= p_.lr * gradients->col(0);
  }

  Rng rng_;
  ParamVector params_;
  SgdParams p_;
  bool minibatch_;
  EpochSampler interior_, constraint_;
  Minibatch pending_;
};

/// Constructs the optimizer for `cfg` starting from `start`. Gradient methods
/// need the collocation set sizes to plan minibatches.
inline std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& cfg, const ParamVector& start, RngSeed seed,
                                                 Index n_interior = 0, Index n_constraint = 0) {
  validate(cfg);
  const RngSeed s{derive_seed(seed.value, 0x0971)};
  switch (cfg.algorithm) {
    case Algorithm::CmaEs: return std::make_unique<CmaEs>(start, cfg.cma, s);
    case Algorithm::XnesNag: return std::make_unique<XnesNag>(start, cfg.xnes, s);
    case Algorithm::Sgd:
      if (n_interior < 1) throw std::invalid_argument("sgd needs a non-empty collocation set");
      return std::make_unique<GradientDescent>(start, cfg.sgd, true, n_interior, n_constraint, s);
    case Algorithm::BatchGd: return std::make_unique<GradientDescent>(start, cfg.sgd, false, 0, 0, s);
  }
  throw std::invalid_argument("unknown algorithm");
}

}  // namespace pinnevo
