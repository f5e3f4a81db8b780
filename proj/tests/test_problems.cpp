#include <cmath>
#include <functional>
#include <numeric>

#include <gtest/gtest.h>

#include "pinnevo/oracles.hpp"
#include "pinnevo/problems.hpp"

using namespace pinnevo;

namespace {

using Fn2 = std::function<double(double, double)>;

// Jets of u along x and t from central differences with step h.
PointJets fd_jets(const Fn2& u, double x, double t, int xo, int to, double h) {
  auto jet = [&](auto f) {
    const double f0 = f(0.0), fp = f(h), fm = f(-h), f2p = f(2 * h), f2m = f(-2 * h);
    return Jet{f0, (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h), (f2p - 2 * fp + 2 * fm - f2m) / (2 * h * h * h)};
  };
  PointJets j;
  if (xo >= 0) {
    j.x = {jet([&](double d) { return u(x + d, t); })};
    j.x_order = xo;
  }
  if (to >= 0) {
    j.t = {jet([&](double d) { return u(x, t + d); })};
    j.t_order = to;
  }
  return j;
}

double residual_rms(const ProblemDef& p, const Fn2& u, double h) {
  const auto [xo, to] = required_orders(p.id);
  double s = 0.0;
  int n = 0;
  for (double x : linspace(p.space.lo, p.space.hi, 41)) {
    for (double t : linspace(p.time.lo + 0.1, p.time.hi - 0.1, 11)) {
      const double r = pde_residual(p, fd_jets(u, x, t, xo, to, h))[0];
      s += r * r;
      ++n;
    }
  }
  return std::sqrt(s / n);
}

}  // namespace

TEST(Problems, IdsRoundTrip) {
  for (auto id : kAllProblems) EXPECT_EQ(parse_problem_id(to_string(id)), id);
  EXPECT_THROW(parse_problem_id("heat"), std::invalid_argument);
}

TEST(Problems, InitialConditions) {
  EXPECT_NEAR(initial_condition(make_problem(ProblemId::KdV), 0.4), 0.9 + 0.3 / std::pow(std::cosh(2.0), 2), 1e-15);
  EXPECT_NEAR(initial_condition(make_problem(ProblemId::KdV), 0.4), 0.92120, 1e-5);
  EXPECT_EQ(initial_condition(make_problem(ProblemId::LinearizedBurgers), 0.0), 10.0);
  EXPECT_EQ(initial_condition(make_problem(ProblemId::NonlinearBurgers), 0.0), 1.0);
  EXPECT_THROW(initial_condition(make_problem(ProblemId::ConvectionDiffusion), 0.0), std::invalid_argument);
}

TEST(Problems, ZeroNetworkConvectionDiffusion) {
  ProblemDef p = make_problem(ProblemId::ConvectionDiffusion);
  const Mlp mlp(default_spec(p.id));
  const ParamVector w = ParamVector::Zero(mlp.param_count());
  const CollocationSet set = sample_collocation(p, RngSeed{1});
  LossBreakdown lb = pinn_loss(p, mlp, w, set);
  EXPECT_EQ(lb.l_pde, 0.0);
  EXPECT_EQ(lb.l_bc, 0.5);
  EXPECT_EQ(lb.total, 0.5);
  p.weights.pde = 2.0;
  EXPECT_EQ(pinn_loss(p, mlp, w, set).total, 0.5);
}

TEST(Problems, ZeroNetworkProjectile) {
  const ProblemDef p = make_problem(ProblemId::Projectile);
  const Mlp mlp(default_spec(p.id));
  const ParamVector w = ParamVector::Zero(mlp.param_count());
  const LossBreakdown lb = pinn_loss(p, mlp, w, sample_collocation(p, RngSeed{1}));
  // (0-0)^2 + (2-0)^2 + (V0 cos 80)^2 + (V0 sin 80)^2
  EXPECT_NEAR(lb.l_ic, 104.0, 1e-12);
  // x_tt = 0 and y_tt + g = g at every interior point.
  EXPECT_NEAR(lb.l_pde, 3.7 * 3.7, 1e-12);
  EXPECT_EQ(lb.total, lb.l_pde + lb.l_ic);
}

TEST(Problems, ResidualOfExactConvectionDiffusion) {
  const ProblemDef p = make_problem(ProblemId::ConvectionDiffusion);
  const double e6 = std::expm1(6.0);
  for (double x : {0.0, 0.1, 0.5, 0.77, 1.0}) {
    const double u1 = 6 * std::exp(6 * x) / e6, u2 = 36 * std::exp(6 * x) / e6;
    PointJets j;
    j.x = {Jet{std::expm1(6 * x) / e6, u1, u2, 0.0}};
    j.x_order = 2;
    EXPECT_NEAR(pde_residual(p, j)[0], 0.0, 1e-9 * std::max(1.0, u2));
  }
}

TEST(Problems, ResidualOfConstantAndFreeFall) {
  PointJets c;
  c.x = {Jet{3.0, 0, 0, 0}};
  c.t = {Jet{3.0, 0, 0, 0}};
  c.x_order = 2;
  c.t_order = 1;
  EXPECT_EQ(pde_residual(make_problem(ProblemId::LinearizedBurgers), c)[0], 0.0);
  PointJets f;
  f.t = {Jet{0, 1, 0, 0}, Jet{0, 0, -3.7, 0}};
  f.t_order = 2;
  const auto r = pde_residual(make_problem(ProblemId::Projectile), f);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], 0.0);
  EXPECT_NEAR(r[1], 0.0, 1e-15);
}

TEST(Problems, ResidualNeedsDerivatives) {
  PointJets j;
  j.x = {Jet{1, 1, 1, 1}};
  j.x_order = 2;
  EXPECT_THROW(pde_residual(make_problem(ProblemId::KdV), j), std::invalid_argument);
}

TEST(Problems, LinearizedBurgersResidualIsLinear) {
  const ProblemDef p = make_problem(ProblemId::LinearizedBurgers);
  Rng rng(RngSeed{4});
  auto rand_jets = [&] {
    PointJets j;
    j.x = {Jet{rng.normal(), rng.normal(), rng.normal(), rng.normal()}};
    j.t = {Jet{j.x[0].value, rng.normal(), rng.normal(), rng.normal()}};
    j.x_order = 2;
    j.t_order = 1;
    return j;
  };
  for (int k = 0; k < 20; ++k) {
    const PointJets a = rand_jets(), b = rand_jets();
    const double al = rng.normal(), be = rng.normal();
    PointJets c;
    c.x = {al * a.x[0] + be * b.x[0]};
    c.t = {al * a.t[0] + be * b.t[0]};
    c.x_order = 2;
    c.t_order = 1;
    EXPECT_NEAR(pde_residual(p, c)[0], al * pde_residual(p, a)[0] + be * pde_residual(p, b)[0], 1e-12);
  }
}

TEST(Problems, ClosedFormsSatisfyTheirEquations) {
  const ProblemDef lb = make_problem(ProblemId::LinearizedBurgers);
  EXPECT_LT(residual_rms(lb, [&](double x, double t) { return analytic_linearized_burgers(lb.params, x, t); }, 1e-3),
            1e-3);
  ProblemDef kdv = make_problem(ProblemId::KdV);
  EXPECT_LT(residual_rms(kdv, [&](double x, double t) { return kdv_soliton(kdv.params, 0.3, 0.4, x, t); }, 1e-3),
            1e-3);
  const ProblemDef pr = make_problem(ProblemId::Projectile);
  for (double t : {0.0, 1.0, 5.5}) {
    PointJets j;
    const double h = 1e-3;
    for (int c = 0; c < 2; ++c) {
      auto f = [&](double d) { return analytic_projectile(pr.params, t + d)[c]; };
      j.t.push_back(Jet{f(0), (f(h) - f(-h)) / (2 * h), (f(h) - 2 * f(0) + f(-h)) / (h * h), 0});
    }
    j.t_order = 2;
    const auto r = pde_residual(pr, j);
    EXPECT_NEAR(r[0], 0.0, 1e-6);
    EXPECT_NEAR(r[1], 0.0, 1e-6);
  }
}

TEST(Collocation, CountsMatchTableThree) {
  struct Want {
    ProblemId id;
    Index total, constraint;
  };
  for (const Want& w : {Want{ProblemId::ConvectionDiffusion, 10000, 2}, Want{ProblemId::Projectile, 10000, 1},
                        Want{ProblemId::KdV, 15477, 77}, Want{ProblemId::LinearizedBurgers, 38793, 193},
                        Want{ProblemId::NonlinearBurgers, 25929, 129}}) {
    const CollocationSet s = sample_collocation(make_problem(w.id), RngSeed{1});
    EXPECT_EQ(s.size(), w.total) << to_string(w.id);
    EXPECT_EQ(s.constraint.cols(), w.constraint) << to_string(w.id);
    EXPECT_EQ(s.targets.cols(), w.constraint);
  }
}

TEST(Collocation, GridSpansDomainAndIcRow) {
  const ProblemDef p = make_problem(ProblemId::LinearizedBurgers);
  const CollocationSet s = sample_collocation(p, RngSeed{1});
  EXPECT_EQ(s.interior.row(0).minCoeff(), -1.5);
  EXPECT_EQ(s.interior.row(0).maxCoeff(), 4.5);
  EXPECT_GT(s.interior.row(1).minCoeff(), 0.0);
  EXPECT_EQ(s.interior.row(1).maxCoeff(), 2.0);
  EXPECT_TRUE((s.constraint.row(1).array() == 0.0).all());
  for (Index i = 0; i < s.constraint.cols(); ++i)
    EXPECT_EQ(s.targets(0, i), initial_condition(p, s.constraint(0, i)));
}

TEST(Collocation, RandomPointsInsideDomain) {
  const ProblemDef p = make_problem(ProblemId::ConvectionDiffusion);
  const CollocationSet s = sample_collocation(p, RngSeed{9});
  EXPECT_GE(s.interior.minCoeff(), 0.0);
  EXPECT_LT(s.interior.maxCoeff(), 1.0);
  EXPECT_EQ(s.targets(0, 0), 0.0);
  EXPECT_EQ(s.targets(0, 1), 1.0);
}

TEST(Collocation, SeedDeterminism) {
  for (auto id : kAllProblems) {
    const ProblemDef p = make_problem(id);
    const CollocationSet a = sample_collocation(p, RngSeed{3}), b = sample_collocation(p, RngSeed{3});
    EXPECT_TRUE(a.interior == b.interior);
    EXPECT_TRUE(a.constraint == b.constraint);
    EXPECT_TRUE(a.targets == b.targets);
  }
  const ProblemDef cd = make_problem(ProblemId::ConvectionDiffusion);
  EXPECT_FALSE(sample_collocation(cd, RngSeed{3}).interior == sample_collocation(cd, RngSeed{4}).interior);
}

TEST(Loss, PermutationInvariant) {
  for (auto id : kAllProblems) {
    const ProblemDef p = make_problem(id);
    const MlpSpec spec = default_spec(id);
    const Mlp mlp(spec);
    const ParamVector w = xavier_init(spec, RngSeed{2});
    const CollocationSet set = sample_collocation(p, RngSeed{2});
    std::vector<Index> ii(static_cast<std::size_t>(set.interior.cols())), ci(static_cast<std::size_t>(set.constraint.cols()));
    std::iota(ii.begin(), ii.end(), Index{0});
    std::iota(ci.begin(), ci.end(), Index{0});
    Rng rng(RngSeed{5});
    for (Index i = static_cast<Index>(ii.size()) - 1; i > 0; --i) std::swap(ii[i], ii[rng.below(i + 1)]);
    std::reverse(ci.begin(), ci.end());
    const CollocationSet shuffled = select(set, ii, ci);
    const LossBreakdown a = pinn_loss(p, mlp, w, set), b = pinn_loss(p, mlp, w, shuffled);
    EXPECT_EQ(a.l_pde, b.l_pde) << to_string(id);
    EXPECT_EQ(a.l_ic, b.l_ic);
    EXPECT_EQ(a.l_bc, b.l_bc);
    EXPECT_EQ(a.total, b.total);
  }
}

TEST(Loss, NonNegativeAndRecombines) {
  Rng rng(RngSeed{8});
  for (auto id : kAllProblems) {
    ProblemDef p = make_problem(id);
    p.weights = {rng.uniform(0.5, 2), rng.uniform(0.5, 2), rng.uniform(0.5, 2)};
    const MlpSpec spec = default_spec(id);
    const Mlp mlp(spec);
    const CollocationSet set = sample_collocation(p, RngSeed{8});
    for (int k = 0; k < 3; ++k) {
      const ParamVector w = 3.0 * xavier_init(spec, RngSeed{rng.below(1000)});
      const LossBreakdown lb = pinn_loss(p, mlp, w, set);
      EXPECT_GE(lb.l_pde, 0.0);
      EXPECT_GE(lb.l_ic, 0.0);
      EXPECT_GE(lb.l_bc, 0.0);
      EXPECT_EQ(lb.total, p.weights.pde * lb.l_pde + p.weights.ic * lb.l_ic + p.weights.bc * lb.l_bc);
    }
  }
}

TEST(Loss, ExactSolutionOnConstraintsOnly) {
  // Evaluating only constraint points: a network is not needed to check the
  // target plumbing, the zero network gives the mean squared target.
  const ProblemDef p = make_problem(ProblemId::KdV);
  const Mlp mlp(default_spec(p.id));
  CollocationSet set = sample_collocation(p, RngSeed{1});
  const double expect = set.targets.squaredNorm() / static_cast<double>(set.targets.cols());
  set.interior.resize(2, 0);
  const LossBreakdown lb = pinn_loss(p, mlp, ParamVector::Zero(mlp.param_count()), set);
  EXPECT_NEAR(lb.l_ic, expect, 1e-14);
  EXPECT_EQ(lb.l_pde, 0.0);
}

TEST(Loss, RejectsMismatchedNetwork) {
  const ProblemDef p = make_problem(ProblemId::KdV);
  const Mlp mlp(default_spec(ProblemId::ConvectionDiffusion));
  EXPECT_THROW(PinnLoss(p, mlp), std::invalid_argument);
}
