#pragma once

// Fully-connected tanh networks over a flat parameter vector.
//
// Packing order (version 1): trunk layers first, then each head's hidden
// layers, then each head's output map. A hidden layer stores its weight
// matrix row-major (out x in) followed by its bias. Output maps have no bias.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pinnevo/io.hpp"
#include "pinnevo/rng.hpp"

namespace pinnevo {

using Index = Eigen::Index;
using ParamVector = Eigen::VectorXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kPackingVersion = 1;

struct HeadSpec {
  std::vector<int> hidden;
  int output_dim = 1;

  bool operator==(const HeadSpec&) const = default;
};

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden;
  std::vector<HeadSpec> heads{HeadSpec{}};

  bool operator==(const MlpSpec&) const = default;

  int output_dim() const {
    int n = 0;
    for (const auto& h : heads) n += h.output_dim;
    return n;
  }

  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
    if (hidden.empty()) throw std::invalid_argument("at least one hidden layer is required");
    if (heads.empty()) throw std::invalid_argument("at least one output head is required");
    auto positive = [](int w) { return w >= 1; };
    if (!std::all_of(hidden.begin(), hidden.end(), positive))
      throw std::invalid_argument("hidden widths must be >= 1");
    for (const auto& h : heads) {
      if (!std::all_of(h.hidden.begin(), h.hidden.end(), positive) || h.output_dim < 1)
        throw std::invalid_argument("head widths must be >= 1");
    }
  }

  /// e.g. "(2)-8-8-8-8-(1)" or "(1)-8-8-[8-(1),8-(1)]"
  std::string describe() const {
    std::string s = "(" + std::to_string(input_dim) + ")";
    for (int w : hidden) s += "-" + std::to_string(w);
    auto head_str = [](const HeadSpec& h) {
      std::string t;
      for (int w : h.hidden) t += std::to_string(w) + "-";
      return t + "(" + std::to_string(h.output_dim) + ")";
    };
    if (heads.size() == 1) return s + "-" + head_str(heads[0]);
    s += "-[";
    for (std::size_t i = 0; i < heads.size(); ++i) s += (i ? "," : "") + head_str(heads[i]);
    return s + "]";
  }
};

inline void to_json(Json& j, const HeadSpec& h) { j = Json{{"hidden", h.hidden}, {"output_dim", h.output_dim}}; }
inline void from_json(const Json& j, HeadSpec& h) {
  h.hidden = j.value("hidden", std::vector<int>{});
  h.output_dim = j.value("output_dim", 1);
}
inline void to_json(Json& j, const MlpSpec& s) {
  j = Json{{"input_dim", s.input_dim}, {"hidden", s.hidden}, {"heads", s.heads}};
}
inline void from_json(const Json& j, MlpSpec& s) {
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.heads = j.contains("heads") ? j.at("heads").get<std::vector<HeadSpec>>() : std::vector<HeadSpec>{HeadSpec{}};
}

struct DenseLayer {
  Index in = 0;
  Index out = 0;
  Index weight_offset = 0;
  Index bias_offset = -1;  // -1 for the unbiased output map

  bool has_bias() const { return bias_offset >= 0; }
  Index end() const { return (has_bias() ? bias_offset + out : weight_offset + in * out); }
};

struct MlpLayout {
  struct Head {
    std::vector<DenseLayer> hidden;
    DenseLayer output;
    Index output_row = 0;  // first row of this head in the stacked output
  };
  std::vector<DenseLayer> trunk;
  std::vector<Head> heads;
  Index param_count = 0;
  Index output_dim = 0;
  Index max_width = 0;
};

inline MlpLayout make_layout(const MlpSpec& spec) {
  spec.validate();
  MlpLayout layout;
  Index offset = 0;
  auto add = [&offset](Index in, Index out, bool bias) {
    DenseLayer l{in, out, offset, -1};
    offset += in * out;
    if (bias) {
      l.bias_offset = offset;
      offset += out;
    }
    return l;
  };
  Index width = spec.input_dim;
  layout.max_width = width;
  for (int w : spec.hidden) {
    layout.trunk.push_back(add(width, w, true));
    width = w;
    layout.max_width = std::max<Index>(layout.max_width, w);
  }
  const Index trunk_width = width;
  Index row = 0;
  layout.heads.resize(spec.heads.size());
  for (std::size_t h = 0; h < spec.heads.size(); ++h) {
    Index hw = trunk_width;
    for (int w : spec.heads[h].hidden) {
      layout.heads[h].hidden.push_back(add(hw, w, true));
      hw = w;
      layout.max_width = std::max<Index>(layout.max_width, w);
    }
    layout.heads[h].output_row = row;
    row += spec.heads[h].output_dim;
  }
  // Output maps are packed after every hidden layer.
  for (std::size_t h = 0; h < spec.heads.size(); ++h) {
    const Index in = spec.heads[h].hidden.empty() ? trunk_width : spec.heads[h].hidden.back();
    layout.heads[h].output = add(in, spec.heads[h].output_dim, false);
  }
  layout.param_count = offset;
  layout.output_dim = row;
  return layout;
}

inline Index param_count(const MlpSpec& spec) { return make_layout(spec).param_count; }

/// Weight matrix of `layer` viewed inside a flat parameter vector.
inline Eigen::Map<const RowMajorMatrix> weight_view(const ParamVector& params, const DenseLayer& layer) {
  return {params.data() + layer.weight_offset, layer.out, layer.in};
}
inline Eigen::Map<RowMajorMatrix> weight_view(ParamVector& params, const DenseLayer& layer) {
  return {params.data() + layer.weight_offset, layer.out, layer.in};
}
inline Eigen::Map<const Eigen::VectorXd> bias_view(const ParamVector& params, const DenseLayer& layer) {
  return {params.data() + layer.bias_offset, layer.out};
}
inline Eigen::Map<Eigen::VectorXd> bias_view(ParamVector& params, const DenseLayer& layer) {
  return {params.data() + layer.bias_offset, layer.out};
}

/// Layers in packing order.
inline std::vector<DenseLayer> packed_layers(const MlpLayout& layout) {
  std::vector<DenseLayer> ordered(layout.trunk);
  for (const auto& h : layout.heads) ordered.insert(ordered.end(), h.hidden.begin(), h.hidden.end());
  for (const auto& h : layout.heads) ordered.push_back(h.output);
  return ordered;
}

/// Unpacked per-layer copies of a parameter vector, in packing order.
struct LayerParams {
  RowMajorMatrix weight;
  Eigen::VectorXd bias;  // empty for output maps
};

inline std::vector<LayerParams> unpack(const MlpLayout& layout, const ParamVector& params) {
  if (params.size() != layout.param_count) throw std::invalid_argument("parameter vector has wrong length");
  std::vector<LayerParams> out;
  for (const auto& l : packed_layers(layout)) {
    LayerParams p{weight_view(params, l), Eigen::VectorXd()};
    if (l.has_bias()) p.bias = bias_view(params, l);
    out.push_back(std::move(p));
  }
  return out;
}

inline ParamVector pack(const MlpLayout& layout, const std::vector<LayerParams>& layers) {
  ParamVector v(layout.param_count);
  Index pos = 0;
  for (const auto& l : layers) {
    if (pos + l.weight.size() + l.bias.size() > layout.param_count)
      throw std::invalid_argument("layer shapes do not match layout");
    for (Index r = 0; r < l.weight.rows(); ++r)
      for (Index c = 0; c < l.weight.cols(); ++c) v[pos++] = l.weight(r, c);
    for (Index r = 0; r < l.bias.size(); ++r) v[pos++] = l.bias[r];
  }
  if (pos != layout.param_count) throw std::invalid_argument("layer shapes do not match layout");
  return v;
}

/// Xavier/Glorot normal: weights ~ N(0, 1/(fan_in + fan_out)), biases zero.
/// Draws follow packing order.
inline ParamVector xavier_init(const MlpSpec& spec, RngSeed seed) {
  const MlpLayout layout = make_layout(spec);
  ParamVector params = ParamVector::Zero(layout.param_count);
  Rng rng(seed);
  for (const auto& l : packed_layers(layout)) {
    const double stddev = std::sqrt(1.0 / static_cast<double>(l.in + l.out));
    for (Index i = 0; i < l.in * l.out; ++i) params[l.weight_offset + i] = stddev * rng.normal();
  }
  return params;
}

namespace detail {

/// Odd-symmetric tanh of n contiguous values through the vectorized
/// exponential. Absolute error is a few ulp of 1, which is what the losses
/// care about.
inline void tanh_inplace(double* data, Index n) {
  Eigen::Map<Eigen::ArrayXd> z(data, n);
  thread_local Eigen::ArrayXd e;
  e = (-2.0 * z.abs()).exp();
  for (Index i = 0; i < n; ++i) data[i] = std::copysign((1.0 - e[i]) / (1.0 + e[i]), data[i]);
}

}  // namespace detail

/// A network topology with its precomputed parameter layout.
class Mlp {
 public:
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)), layout_(make_layout(spec_)) {}

  const MlpSpec& spec() const { return spec_; }
  const MlpLayout& layout() const { return layout_; }
  Index param_count() const { return layout_.param_count; }
  Index input_dim() const { return spec_.input_dim; }
  Index output_dim() const { return layout_.output_dim; }

  /// Plain evaluation of a batch: `inputs` is input_dim x N, result is
  /// output_dim x N.
  Eigen::MatrixXd forward_batch(const ParamVector& params, const Eigen::MatrixXd& inputs) const {
    check_params(params);
    if (inputs.rows() != input_dim()) throw std::invalid_argument("input dimension mismatch");
    Eigen::MatrixXd out(output_dim(), inputs.cols());
    constexpr Index kChunk = 512;
    Eigen::MatrixXd a, z;
    for (Index start = 0; start < inputs.cols(); start += kChunk) {
      const Index n = std::min(kChunk, inputs.cols() - start);
      a = inputs.middleCols(start, n);
      for (const auto& l : layout_.trunk) a = activate(params, l, a);
      for (const auto& h : layout_.heads) {
        Eigen::MatrixXd ha = a;
        for (const auto& l : h.hidden) ha = activate(params, l, ha);
        out.block(h.output_row, start, h.output.out, n).noalias() = weight_view(params, h.output) * ha;
      }
    }
    return out;
  }

  Eigen::VectorXd forward(const ParamVector& params, const Eigen::VectorXd& input) const {
    if (input.size() != input_dim()) throw std::invalid_argument("input dimension mismatch");
    return forward_batch(params, input);
  }

  void check_params(const ParamVector& params) const {
    if (params.size() != param_count())
      throw std::invalid_argument("parameter vector has length " + std::to_string(params.size()) + ", expected " +
                                  std::to_string(param_count()));
  }

 private:
  static Eigen::MatrixXd activate(const ParamVector& params, const DenseLayer& l, const Eigen::MatrixXd& a) {
    Eigen::MatrixXd z = weight_view(params, l) * a;
    z.colwise() += bias_view(params, l);
    detail::tanh_inplace(z.data(), z.size());
    return z;
  }

  MlpSpec spec_;
  MlpLayout layout_;
};

// Checkpoints: container header {"kind":"checkpoint","spec":..,"seed":..,
// "packing_version":1} followed by the parameters.

struct Checkpoint {
  MlpSpec spec;
  std::uint64_t seed = 0;
  ParamVector params;
  Json extra = Json::object();
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Json header{{"kind", "checkpoint"},
              {"spec", ckpt.spec},
              {"seed", ckpt.seed},
              {"packing_version", kPackingVersion},
              {"extra", ckpt.extra}};
  io::write_atomic(path, io::encode_container(header, std::vector<double>(ckpt.params.begin(), ckpt.params.end())));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto c = io::decode_container(io::read_file(path));
  if (c.header.value("kind", "") != "checkpoint") throw FormatError("not a checkpoint file", 0);
  if (c.header.value("packing_version", 0) != kPackingVersion) throw FormatError("unsupported packing version", 0);
  Checkpoint ckpt;
  ckpt.spec = c.header.at("spec").get<MlpSpec>();
  ckpt.seed = c.header.value("seed", std::uint64_t{0});
  ckpt.extra = c.header.value("extra", Json::object());
  if (static_cast<Index>(c.payload.size()) != param_count(ckpt.spec))
    throw FormatError("parameter count does not match spec", 0);
  ckpt.params = Eigen::Map<const ParamVector>(c.payload.data(), static_cast<Index>(c.payload.size()));
  return ckpt;
}

}  // namespace pinnevo
