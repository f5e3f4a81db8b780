#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "pinnevo/mlp.hpp"
#include "pinnevo/problems.hpp"
#include "tmpdir.hpp"

using namespace pinnevo;

TEST(Mlp, ParamCountsPerProblem) {
  EXPECT_EQ(param_count(default_spec(ProblemId::ConvectionDiffusion)), 250);
  EXPECT_EQ(param_count(default_spec(ProblemId::LinearizedBurgers)), 260);
  EXPECT_EQ(param_count(default_spec(ProblemId::Projectile)), 248);
  EXPECT_EQ(param_count(default_spec(ProblemId::KdV)), 248);
  EXPECT_EQ(param_count(default_spec(ProblemId::NonlinearBurgers)), 176);
}

TEST(Mlp, ZeroParamsGiveZeroOutput) {
  for (auto id : kAllProblems) {
    const MlpSpec spec = default_spec(id);
    const Mlp mlp(spec);
    const ParamVector w = ParamVector::Zero(mlp.param_count());
    Rng rng(RngSeed{3});
    for (int k = 0; k < 10; ++k) {
      Eigen::VectorXd x(spec.input_dim);
      for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-5, 5);
      EXPECT_EQ(mlp.forward(w, x).squaredNorm(), 0.0);
    }
  }
}

TEST(Mlp, SingleNeuron) {
  const Mlp mlp(MlpSpec{1, {1}, {HeadSpec{{}, 1}}});
  ASSERT_EQ(mlp.param_count(), 3);
  ParamVector w(3);
  w << 1.0, 0.0, 1.0;  // weight, bias, output weight
  EXPECT_NEAR(mlp.forward(w, Eigen::VectorXd::Constant(1, 0.5))[0], 0.46211715726000974, 1e-15);
}

TEST(Mlp, ProjectileReturnsTwoOutputs) {
  const MlpSpec spec = default_spec(ProblemId::Projectile);
  const Mlp mlp(spec);
  const ParamVector w = xavier_init(spec, RngSeed{1});
  EXPECT_EQ(mlp.forward(w, Eigen::VectorXd::Zero(1)).size(), 2);
}

TEST(Mlp, HeadsAreIndependent) {
  const MlpSpec spec = default_spec(ProblemId::Projectile);
  const Mlp mlp(spec);
  ParamVector w = xavier_init(spec, RngSeed{2});
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.7);
  const Eigen::VectorXd before = mlp.forward(w, x);
  // Perturb the second head's hidden layer only.
  const auto& l = mlp.layout().heads[1].hidden[0];
  w[l.weight_offset] += 0.3;
  const Eigen::VectorXd after = mlp.forward(w, x);
  EXPECT_EQ(after[0], before[0]);
  EXPECT_NE(after[1], before[1]);
}

TEST(Mlp, PackUnpackRoundTrip) {
  Rng rng(RngSeed{11});
  for (auto id : kAllProblems) {
    const MlpLayout layout = make_layout(default_spec(id));
    ParamVector v(layout.param_count);
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    const ParamVector back = pack(layout, unpack(layout, v));
    EXPECT_TRUE(back == v);
  }
}

TEST(Mlp, PackingIsLayerMajorWeightsThenBias) {
  const MlpLayout layout = make_layout(MlpSpec{2, {3}, {HeadSpec{{}, 1}}});
  ASSERT_EQ(layout.param_count, 2 * 3 + 3 + 3);
  EXPECT_EQ(layout.trunk[0].weight_offset, 0);
  EXPECT_EQ(layout.trunk[0].bias_offset, 6);
  EXPECT_EQ(layout.heads[0].output.weight_offset, 9);
  EXPECT_FALSE(layout.heads[0].output.has_bias());
}

TEST(Mlp, BatchMatchesPointwise) {
  const MlpSpec spec = default_spec(ProblemId::KdV);
  const Mlp mlp(spec);
  const ParamVector w = xavier_init(spec, RngSeed{5});
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 37);
  const Eigen::MatrixXd y = mlp.forward_batch(w, x);
  for (Index j = 0; j < x.cols(); ++j) EXPECT_NEAR(y(0, j), mlp.forward(w, x.col(j))[0], 1e-15);
}

TEST(Mlp, TanhKernelMatchesStd) {
  Eigen::ArrayXd z = Eigen::ArrayXd::LinSpaced(20001, -30.0, 30.0);
  Eigen::ArrayXd t = z;
  detail::tanh_inplace(t.data(), t.size());
  for (Index i = 0; i < z.size(); ++i) ASSERT_NEAR(t[i], std::tanh(z[i]), 4e-16) << z[i];
  // Odd symmetry is exact.
  Eigen::ArrayXd neg = -z;
  detail::tanh_inplace(neg.data(), neg.size());
  for (Index i = 0; i < z.size(); ++i) ASSERT_EQ(t[i], -neg[i]);
}

TEST(Mlp, OddSymmetry) {
  // Zero-bias single hidden layer: negating first-layer weights negates the
  // pre-activations; negating output weights as well restores the output.
  const MlpSpec spec{1, {6}, {HeadSpec{{}, 1}}};
  const Mlp mlp(spec);
  ParamVector w = xavier_init(spec, RngSeed{7});
  const auto& hidden = mlp.layout().trunk[0];
  const auto& out = mlp.layout().heads[0].output;
  ParamVector flipped = w;
  weight_view(flipped, hidden) *= -1.0;
  weight_view(flipped, out) *= -1.0;
  for (double x : {-2.0, -0.3, 0.0, 0.9, 4.0}) {
    const Eigen::VectorXd in = Eigen::VectorXd::Constant(1, x);
    EXPECT_NEAR(mlp.forward(flipped, in)[0], mlp.forward(w, in)[0], 1e-15);
  }
}

TEST(Mlp, LipschitzInParams) {
  const MlpSpec spec = default_spec(ProblemId::ConvectionDiffusion);
  const Mlp mlp(spec);
  const ParamVector w = xavier_init(spec, RngSeed{9});
  Rng rng(RngSeed{10});
  for (int k = 0; k < 20; ++k) {
    const Index i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(w.size())));
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, rng.uniform());
    double prev = 0.0;
    for (double eps : {1e-3, 1e-4, 1e-5}) {
      ParamVector p = w;
      p[i] += eps;
      const double d = std::abs(mlp.forward(p, x)[0] - mlp.forward(w, x)[0]);
      EXPECT_LE(d, 10.0 * eps);
      if (prev > 1e-12) {
        EXPECT_NEAR(d / prev, 0.1, 0.02);
      }
      prev = d;
    }
  }
}

TEST(Mlp, XavierIsSeededAndScaled) {
  const MlpSpec spec{1, {200, 200}, {HeadSpec{{}, 1}}};
  const ParamVector a = xavier_init(spec, RngSeed{1});
  const ParamVector b = xavier_init(spec, RngSeed{1});
  const ParamVector c = xavier_init(spec, RngSeed{2});
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  const Mlp mlp(spec);
  const auto& l = mlp.layout().trunk[1];
  const auto wv = weight_view(a, l);
  const double var = wv.array().square().mean();
  EXPECT_NEAR(var, 1.0 / 400.0, 0.1 / 400.0);
  EXPECT_EQ(bias_view(a, l).squaredNorm(), 0.0);
}

TEST(Mlp, RejectsBadShapes) {
  EXPECT_THROW(make_layout(MlpSpec{0, {4}, {HeadSpec{}}}), std::invalid_argument);
  EXPECT_THROW(make_layout(MlpSpec{1, {}, {HeadSpec{}}}), std::invalid_argument);
  EXPECT_THROW(make_layout(MlpSpec{1, {0}, {HeadSpec{}}}), std::invalid_argument);
  const Mlp mlp(default_spec(ProblemId::ConvectionDiffusion));
  EXPECT_THROW(mlp.forward(ParamVector::Zero(3), Eigen::VectorXd::Zero(1)), std::invalid_argument);
}

TEST(Mlp, CheckpointRoundTrip) {
  test::TempDir dir;
  const MlpSpec spec = default_spec(ProblemId::Projectile);
  Checkpoint ck{spec, 42, xavier_init(spec, RngSeed{42}), Json{{"note", "x"}}};
  const auto path = dir.path() / "a.ckpt";
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.spec, spec);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_TRUE(back.params == ck.params);
  EXPECT_EQ(back.extra, ck.extra);
}

TEST(Mlp, CheckpointRejectsTruncation) {
  test::TempDir dir;
  const MlpSpec spec = default_spec(ProblemId::ConvectionDiffusion);
  const auto path = dir.path() / "a.ckpt";
  save_checkpoint({spec, 1, xavier_init(spec, RngSeed{1}), Json::object()}, path);
  std::string bytes = io::read_file(path);
  bytes.resize(bytes.size() - 5);
  io::write_atomic(path, bytes);
  try {
    load_checkpoint(path);
    FAIL() << "truncated checkpoint loaded";
  } catch (const FormatError& e) {
    EXPECT_GT(e.byte_offset(), 0u);
  }
}

TEST(Rng, StreamIsReproducible) {
  Rng a(RngSeed{123}), b(RngSeed{123});
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal());
  Rng c(RngSeed{123});
  c.uniform();
  EXPECT_FALSE(c == Rng(RngSeed{123}));
}

TEST(Rng, NormalMoments) {
  Rng r(RngSeed{5});
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, BelowStaysInRange) {
  Rng r(RngSeed{6});
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[r.below(7)];
  for (int h : hits) EXPECT_GT(h, 850);
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
}
