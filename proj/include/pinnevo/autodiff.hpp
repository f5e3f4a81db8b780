#pragma once

// Input derivatives of tanh networks, and parameter gradients through them.
//
// Jet is a scalar truncated Taylor bundle used for point evaluations. The
// batched JetEngine propagates the same bundles through whole chunks of
// collocation points at once and back-propagates a loss seeded on the output
// channels, which is what the training losses use.

#include <algorithm>
#include <cmath>
#include <utility>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pinnevo/mlp.hpp"

namespace pinnevo {

/// Value and first three pure derivatives along one coordinate.
struct Jet {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  double d3 = 0.0;

  static Jet constant(double c) { return {c, 0.0, 0.0, 0.0}; }
  static Jet variable(double x) { return {x, 1.0, 0.0, 0.0}; }

  double derivative(int k) const {
    switch (k) {
      case 0: return value;
      case 1: return d1;
      case 2: return d2;
      case 3: return d3;
      default: throw std::out_of_range("jet order above 3");
    }
  }

  friend Jet operator+(const Jet& a, const Jet& b) { return {a.value + b.value, a.d1 + b.d1, a.d2 + b.d2, a.d3 + b.d3}; }
  friend Jet operator-(const Jet& a, const Jet& b) { return {a.value - b.value, a.d1 - b.d1, a.d2 - b.d2, a.d3 - b.d3}; }
  friend Jet operator-(const Jet& a) { return {-a.value, -a.d1, -a.d2, -a.d3}; }
  friend Jet operator*(double s, const Jet& a) { return {s * a.value, s * a.d1, s * a.d2, s * a.d3}; }
  friend Jet operator*(const Jet& a, double s) { return s * a; }
  friend Jet operator+(const Jet& a, double c) { return {a.value + c, a.d1, a.d2, a.d3}; }

  // Leibniz rule truncated at order 3.
  friend Jet operator*(const Jet& a, const Jet& b) {
    return {a.value * b.value, a.d1 * b.value + a.value * b.d1, a.d2 * b.value + 2.0 * a.d1 * b.d1 + a.value * b.d2,
            a.d3 * b.value + 3.0 * a.d2 * b.d1 + 3.0 * a.d1 * b.d2 + a.value * b.d3};
  }
  Jet& operator+=(const Jet& o) { return *this = *this + o; }

  bool operator==(const Jet&) const = default;
};

/// Composes f with a jet given f, f', f'', f''' at a.value (Faa di Bruno).
inline Jet compose(const Jet& a, double f0, double f1, double f2, double f3) {
  return {f0, f1 * a.d1, f2 * a.d1 * a.d1 + f1 * a.d2, f3 * a.d1 * a.d1 * a.d1 + 3.0 * f2 * a.d1 * a.d2 + f1 * a.d3};
}

inline Jet tanh(const Jet& a) {
  const double s = std::tanh(a.value);
  const double s1 = 1.0 - s * s;
  const double s2 = -2.0 * s * s1;
  const double s3 = -2.0 * s1 * (s1 - 2.0 * s * s);
  return compose(a, s, s1, s2, s3);
}

/// Jets of every network output along input coordinate `coord`, computed with
/// scalar arithmetic. Derivatives above `order` are reported as zero.
inline std::vector<Jet> eval_jets(const Mlp& mlp, const ParamVector& params, const Eigen::VectorXd& input, int coord,
                                  int order) {
  mlp.check_params(params);
  if (input.size() != mlp.input_dim()) throw std::invalid_argument("input dimension mismatch");
  if (coord < 0 || coord >= mlp.input_dim()) throw std::invalid_argument("coordinate index out of range");
  if (order < 0 || order > 3) throw std::invalid_argument("jet order " + std::to_string(order) + " unsupported (max 3)");

  std::vector<Jet> a(static_cast<std::size_t>(input.size()));
  for (Index i = 0; i < input.size(); ++i) a[i] = (i == coord) ? Jet::variable(input[i]) : Jet::constant(input[i]);

  auto dense = [&params](const DenseLayer& l, const std::vector<Jet>& in, bool activate) {
    const auto w = weight_view(params, l);
    std::vector<Jet> out(static_cast<std::size_t>(l.out));
    for (Index r = 0; r < l.out; ++r) {
      Jet z = Jet::constant(l.has_bias() ? params[l.bias_offset + r] : 0.0);
      for (Index c = 0; c < l.in; ++c) z += w(r, c) * in[c];
      out[r] = activate ? tanh(z) : z;
    }
    return out;
  };
  for (const auto& l : mlp.layout().trunk) a = dense(l, a, true);
  std::vector<Jet> result;
  for (const auto& h : mlp.layout().heads) {
    auto ha = a;
    for (const auto& l : h.hidden) ha = dense(l, ha, true);
    auto o = dense(h.output, ha, false);
    result.insert(result.end(), o.begin(), o.end());
  }
  for (auto& j : result) {
    if (order < 3) j.d3 = 0.0;
    if (order < 2) j.d2 = 0.0;
    if (order < 1) j.d1 = 0.0;
  }
  return result;
}

inline Jet eval_jet(const Mlp& mlp, const ParamVector& params, const Eigen::VectorXd& input, int coord, int order,
                    int output = 0) {
  auto jets = eval_jets(mlp, params, input, coord, order);
  if (output < 0 || output >= static_cast<int>(jets.size())) throw std::invalid_argument("output index out of range");
  return jets[static_cast<std::size_t>(output)];
}

struct JetDirection {
  int coord = 0;
  int order = 1;
};

/// Which derivative channels the batched engine carries. Channel 0 is the
/// value; direction d contributes channels for orders 1..order_d.
class JetPlan {
 public:
  JetPlan() = default;
  explicit JetPlan(std::vector<JetDirection> dirs) : dirs_(std::move(dirs)) {
    int next = 1;
    for (std::size_t i = 0; i < dirs_.size(); ++i) {
      if (dirs_[i].order < 1 || dirs_[i].order > 3)
        throw std::invalid_argument("jet order " + std::to_string(dirs_[i].order) + " unsupported (1..3)");
      for (std::size_t j = 0; j < i; ++j)
        if (dirs_[j].coord == dirs_[i].coord) throw std::invalid_argument("duplicate jet coordinate");
      offsets_.push_back(next);
      next += dirs_[i].order;
    }
    channels_ = next;
  }

  int channels() const { return channels_; }
  const std::vector<JetDirection>& directions() const { return dirs_; }

  /// Channel holding the k-th derivative along `coord` (k = 0 is the value).
  int channel(int coord, int k) const {
    if (k == 0) return 0;
    for (std::size_t i = 0; i < dirs_.size(); ++i) {
      if (dirs_[i].coord == coord) {
        if (k > dirs_[i].order)
          throw std::invalid_argument("derivative order " + std::to_string(k) + " along coordinate " +
                                      std::to_string(coord) + " not carried by this plan");
        return offsets_[i] + k - 1;
      }
    }
    throw std::invalid_argument("coordinate " + std::to_string(coord) + " not carried by this plan");
  }

 private:
  std::vector<JetDirection> dirs_;
  std::vector<int> offsets_;
  int channels_ = 1;
};

/// Network outputs (or their adjoints) for one chunk of points. Storage is
/// output_dim x (channels * n), channel c occupying columns [c*n, (c+1)*n).
class ChunkChannels {
 public:
  ChunkChannels(Eigen::MatrixXd& m, Index n, Index first) : m_(&m), n_(n), first_(first) {}

  Index size() const { return n_; }
  /// Index of the chunk's first point within the full point set.
  Index first() const { return first_; }

  auto row(Index output, int channel) { return m_->block(output, channel * n_, 1, n_).array(); }
  auto row(Index output, int channel) const {
    return static_cast<const Eigen::MatrixXd&>(*m_).block(output, channel * n_, 1, n_).array();
  }

 private:
  Eigen::MatrixXd* m_;
  Index n_;
  Index first_;
};

/// Batched forward propagation of jets through a tanh network, with an exact
/// reverse pass for parameter gradients.
class JetEngine {
 public:
  static constexpr Index kChunk = 256;

  JetEngine(const Mlp& mlp, JetPlan plan) : mlp_(&mlp), plan_(std::move(plan)) {
    for (const auto& d : plan_.directions())
      if (d.coord < 0 || d.coord >= mlp.input_dim()) throw std::invalid_argument("jet coordinate out of range");
  }

  const JetPlan& plan() const { return plan_; }

  /// Runs every chunk of `points` (input_dim x N) through the network and
  /// hands the output channels to `seed(const ChunkChannels& out,
  /// ChunkChannels* adjoint) -> double`. The seed returns the chunk's loss
  /// contribution and, when `adjoint` is non-null, writes d(loss)/d(output
  /// channel) into it. Contributions are summed in chunk order; if `grad` is
  /// non-null the parameter gradient is accumulated into it.
  template <class Seed>
  double accumulate(const ParamVector& params, const Eigen::MatrixXd& points, Seed&& seed,
                    ParamVector* grad = nullptr) const {
    mlp_->check_params(params);
    if (points.rows() != mlp_->input_dim()) throw std::invalid_argument("point dimension mismatch");
    if (grad != nullptr && grad->size() != params.size()) throw std::invalid_argument("gradient has wrong length");
    Workspace ws;
    double total = 0.0;
    for (Index start = 0; start < points.cols(); start += kChunk) {
      const Index n = std::min(kChunk, points.cols() - start);
      forward_chunk(params, points.middleCols(start, n), grad != nullptr, ws);
      ChunkChannels out(ws.output, n, start);
      if (grad == nullptr) {
        total += seed(std::as_const(out), static_cast<ChunkChannels*>(nullptr));
      } else {
        ws.output_adjoint.setZero(ws.output.rows(), ws.output.cols());
        ChunkChannels adj(ws.output_adjoint, n, start);
        total += seed(std::as_const(out), &adj);
        backward_chunk(params, ws, *grad);
      }
    }
    return total;
  }

  /// Output channels for all points: output_dim x (channels * N), channel-major.
  Eigen::MatrixXd evaluate(const ParamVector& params, const Eigen::MatrixXd& points) const {
    const int nc = plan_.channels();
    const Index total = points.cols();
    Eigen::MatrixXd result(mlp_->output_dim(), nc * total);
    accumulate(params, points, [&](const ChunkChannels& out, ChunkChannels*) {
      for (Index o = 0; o < mlp_->output_dim(); ++o)
        for (int c = 0; c < nc; ++c) result.block(o, c * total + out.first(), 1, out.size()) = out.row(o, c).matrix();
      return 0.0;
    });
    return result;
  }

 private:
  struct LayerCache {
    Eigen::MatrixXd z;                  // pre-activations, all channels
    Eigen::MatrixXd a;                  // activations, all channels
    Eigen::ArrayXXd s, s1, s2, s3;      // tanh and its derivatives at the value channel
  };

  struct Workspace {
    Eigen::MatrixXd input;
    std::vector<LayerCache> trunk;
    std::vector<std::vector<LayerCache>> heads;
    Eigen::MatrixXd output;
    Eigen::MatrixXd output_adjoint;
    Eigen::MatrixXd adj_a, adj_z, adj_trunk;
  };

  void forward_layer(const ParamVector& params, const DenseLayer& l, const Eigen::MatrixXd& in, Index n, bool backward,
                     LayerCache& c) const {
    const int nc = plan_.channels();
    c.z.resize(l.out, nc * n);
    c.z.noalias() = weight_view(params, l) * in;
    c.z.leftCols(n).colwise() += bias_view(params, l);
    c.a.resize(l.out, nc * n);
    const Index m = l.out * n;
    c.s.resize(l.out, n);
    c.s1.resize(l.out, n);
    double* s = c.s.data();
    double* s1 = c.s1.data();
    std::copy_n(c.z.data(), m, s);
    detail::tanh_inplace(s, m);
    const int top = max_order();
    const bool want2 = top >= 2 || (backward && top >= 1);
    const bool want3 = top >= 3 || (backward && top >= 2);
    if (want2) c.s2.resize(l.out, n);
    if (want3) c.s3.resize(l.out, n);
    double* s2 = c.s2.data();
    double* s3 = c.s3.data();
    for (Index i = 0; i < m; ++i) s1[i] = 1.0 - s[i] * s[i];
    if (want2)
      for (Index i = 0; i < m; ++i) s2[i] = -2.0 * s[i] * s1[i];
    if (want3)
      for (Index i = 0; i < m; ++i) s3[i] = -2.0 * s1[i] * (s1[i] - 2.0 * s[i] * s[i]);
    std::copy_n(s, m, c.a.data());
    for (const auto& d : plan_.directions()) {
      const Index base = plan_.channel(d.coord, 1) * m;
      const double* z1 = c.z.data() + base;
      double* a1 = c.a.data() + base;
      if (d.order == 1) {
        for (Index i = 0; i < m; ++i) a1[i] = s1[i] * z1[i];
      } else if (d.order == 2) {
        const double* z2 = z1 + m;
        double* a2 = a1 + m;
        for (Index i = 0; i < m; ++i) {
          a1[i] = s1[i] * z1[i];
          a2[i] = s2[i] * z1[i] * z1[i] + s1[i] * z2[i];
        }
      } else {
        const double* z2 = z1 + m;
        const double* z3 = z1 + 2 * m;
        double* a2 = a1 + m;
        double* a3 = a1 + 2 * m;
        for (Index i = 0; i < m; ++i) {
          const double q = z1[i] * z1[i];
          a1[i] = s1[i] * z1[i];
          a2[i] = s2[i] * q + s1[i] * z2[i];
          a3[i] = s3[i] * q * z1[i] + 3.0 * s2[i] * z1[i] * z2[i] + s1[i] * z3[i];
        }
      }
    }
  }

  int max_order() const {
    int top = 0;
    for (const auto& d : plan_.directions()) top = std::max(top, d.order);
    return top;
  }

  // Maps d(loss)/d(activations) in `adj` to d(loss)/d(pre-activations) in `out`.
  void activation_adjoint(const LayerCache& c, const Eigen::MatrixXd& adj, Index n, Eigen::MatrixXd& out) const {
    out.resize(adj.rows(), adj.cols());
    auto z0bar = out.leftCols(n).array();
    z0bar = adj.leftCols(n).array() * c.s1;
    Eigen::ArrayXXd s4;
    for (const auto& d : plan_.directions()) {
      const int base = plan_.channel(d.coord, 1);
      const auto z1 = c.z.middleCols(base * n, n).array();
      const auto a1bar = adj.middleCols(base * n, n).array();
      auto z1bar = out.middleCols(base * n, n).array();
      z1bar = a1bar * c.s1;
      z0bar += a1bar * z1 * c.s2;
      if (d.order >= 2) {
        const auto z2 = c.z.middleCols((base + 1) * n, n).array();
        const auto a2bar = adj.middleCols((base + 1) * n, n).array();
        auto z2bar = out.middleCols((base + 1) * n, n).array();
        z1bar += a2bar * 2.0 * c.s2 * z1;
        z2bar = a2bar * c.s1;
        z0bar += a2bar * (c.s3 * z1.square() + c.s2 * z2);
        if (d.order >= 3) {
          const auto z3 = c.z.middleCols((base + 2) * n, n).array();
          const auto a3bar = adj.middleCols((base + 2) * n, n).array();
          auto z3bar = out.middleCols((base + 2) * n, n).array();
          if (s4.size() == 0) s4 = -4.0 * c.s1 * c.s2 + 8.0 * c.s * c.s1.square() + 4.0 * c.s.square() * c.s2;
          z1bar += a3bar * (3.0 * c.s3 * z1.square() + 3.0 * c.s2 * z2);
          z2bar += a3bar * 3.0 * c.s2 * z1;
          z3bar = a3bar * c.s1;
          z0bar += a3bar * (s4 * z1.cube() + 3.0 * c.s3 * z1 * z2 + c.s2 * z3);
        }
      }
    }
  }

  template <class InputBlock>
  void forward_chunk(const ParamVector& params, const InputBlock& x, bool backward, Workspace& ws) const {
    const auto& layout = mlp_->layout();
    const int nc = plan_.channels();
    const Index n = x.cols();
    ws.input.setZero(mlp_->input_dim(), nc * n);
    ws.input.leftCols(n) = x;
    for (const auto& d : plan_.directions()) ws.input.block(d.coord, plan_.channel(d.coord, 1) * n, 1, n).setOnes();

    ws.trunk.resize(layout.trunk.size());
    const Eigen::MatrixXd* prev = &ws.input;
    for (std::size_t i = 0; i < layout.trunk.size(); ++i) {
      forward_layer(params, layout.trunk[i], *prev, n, backward, ws.trunk[i]);
      prev = &ws.trunk[i].a;
    }
    ws.heads.resize(layout.heads.size());
    ws.output.resize(mlp_->output_dim(), nc * n);
    for (std::size_t h = 0; h < layout.heads.size(); ++h) {
      const auto& head = layout.heads[h];
      ws.heads[h].resize(head.hidden.size());
      const Eigen::MatrixXd* hp = prev;
      for (std::size_t i = 0; i < head.hidden.size(); ++i) {
        forward_layer(params, head.hidden[i], *hp, n, backward, ws.heads[h][i]);
        hp = &ws.heads[h][i].a;
      }
      ws.output.middleRows(head.output_row, head.output.out).noalias() = weight_view(params, head.output) * *hp;
    }
  }

  void accumulate_layer_grad(const DenseLayer& l, const Eigen::MatrixXd& zbar, const Eigen::MatrixXd& in, Index n,
                             ParamVector& grad) const {
    weight_view(grad, l).noalias() += zbar * in.transpose();
    if (l.has_bias()) bias_view(grad, l) += zbar.leftCols(n).rowwise().sum();
  }

  void backward_chunk(const ParamVector& params, Workspace& ws, ParamVector& grad) const {
    const auto& layout = mlp_->layout();
    const Index n = ws.output.cols() / plan_.channels();
    const Eigen::MatrixXd& trunk_out = layout.trunk.empty() ? ws.input : ws.trunk.back().a;
    ws.adj_trunk.setZero(trunk_out.rows(), trunk_out.cols());

    for (std::size_t h = 0; h < layout.heads.size(); ++h) {
      const auto& head = layout.heads[h];
      const auto obar = ws.output_adjoint.middleRows(head.output_row, head.output.out);
      const Eigen::MatrixXd& last = head.hidden.empty() ? trunk_out : ws.heads[h].back().a;
      weight_view(grad, head.output).noalias() += obar * last.transpose();
      ws.adj_a.noalias() = weight_view(params, head.output).transpose() * obar;
      for (std::size_t i = head.hidden.size(); i-- > 0;) {
        const auto& cache = ws.heads[h][i];
        const Eigen::MatrixXd& in = (i == 0) ? trunk_out : ws.heads[h][i - 1].a;
        activation_adjoint(cache, ws.adj_a, n, ws.adj_z);
        accumulate_layer_grad(head.hidden[i], ws.adj_z, in, n, grad);
        ws.adj_a.noalias() = weight_view(params, head.hidden[i]).transpose() * ws.adj_z;
      }
      ws.adj_trunk += ws.adj_a;
    }

    ws.adj_a = ws.adj_trunk;
    for (std::size_t i = layout.trunk.size(); i-- > 0;) {
      const Eigen::MatrixXd& in = (i == 0) ? ws.input : ws.trunk[i - 1].a;
      activation_adjoint(ws.trunk[i], ws.adj_a, n, ws.adj_z);
      accumulate_layer_grad(layout.trunk[i], ws.adj_z, in, n, grad);
      if (i > 0) ws.adj_a.noalias() = weight_view(params, layout.trunk[i]).transpose() * ws.adj_z;
    }
  }

  const Mlp* mlp_;
  JetPlan plan_;
};

/// Dense Hessian by central differences of an exact gradient, symmetrized.
/// `grad_fn(params) -> Eigen::VectorXd`.
struct HessianOptions {
  Index max_dimension = 2000;
  double relative_step = 1e-5;
};

template <class GradFn>
Eigen::MatrixXd hessian(GradFn&& grad_fn, const ParamVector& params, HessianOptions opts = {}) {
  const Index n = params.size();
  if (n > opts.max_dimension)
    throw std::invalid_argument("Hessian dimension " + std::to_string(n) + " exceeds cap " +
                                std::to_string(opts.max_dimension));
  Eigen::MatrixXd h(n, n);
  ParamVector probe = params;
  for (Index j = 0; j < n; ++j) {
    const double step = opts.relative_step * std::max(1.0, std::abs(params[j]));
    probe[j] = params[j] + step;
    const Eigen::VectorXd gp = grad_fn(std::as_const(probe));
    probe[j] = params[j] - step;
    const Eigen::VectorXd gm = grad_fn(std::as_const(probe));
    probe[j] = params[j];
    h.col(j) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace pinnevo
