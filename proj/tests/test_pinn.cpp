#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dqpinn/pinn/features.hpp"
#include "dqpinn/pinn/loss.hpp"
#include "dqpinn/pinn/model.hpp"
#include "dqpinn/problem.hpp"

using namespace dqpinn;
using namespace dqpinn::pinn;
using dqme::RdtBasis;

namespace {

// Spinless level with one discrete bath level; N_E = 1, M_max = 1 gives 12 states.
struct SmallInstance {
  RdtBasis basis = dqme::enumerate_basis(1, 1, 1);
  dqme::Liouvillian L;

  SmallInstance() {
    const auto levels = dqme::pair_levels(reference::discrete_level_modes({{0.4, cplx(0.5, 0.2), 0, 0}}, 1.2, 0.1));
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(2, 2);
    h(1, 1) = 0.7;
    L = dqme::build_liouvillian(h, levels, basis, dqme::selected_convention().selected, 1, {false, 1e-12});
  }
  Shape shape(int hidden = 5, int layers = 3, int features = 3) const { return {4, features, hidden, layers}; }
};

FeatureMap poly3() { return FeatureMap::parse({"t", "t^2", "t^3"}); }

std::vector<double> grid(double a, double b, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(a + (b - a) * i / (n - 1));
  return out;
}

Model placed(Model m, double a, double b) {
  m.t_start = a;
  m.t_end = b;
  return m;
}

}  // namespace

TEST(Features, CatalogAndParsing) {
  const auto f = FeatureMap::parse({"t", "t^2", "t^3", "t^1.5", "t^0.5/(t+0.015)", "0"});
  std::vector<double> v(6);
  f.eval(0.04, v);
  EXPECT_DOUBLE_EQ(v[0], 0.04);
  EXPECT_DOUBLE_EQ(v[1], 0.04 * 0.04);
  EXPECT_DOUBLE_EQ(v[2], 0.04 * 0.04 * 0.04);
  EXPECT_DOUBLE_EQ(v[3], 0.04 * std::sqrt(0.04));
  EXPECT_DOUBLE_EQ(v[4], 0.2 / 0.055);
  EXPECT_DOUBLE_EQ(v[5], 0.0);
  EXPECT_EQ(FeatureMap::parse(f.names()), f);
  EXPECT_THROW(FeatureMap::parse({"t^0.5/(t+0.01)", "t^0.5/(t+0.02)"}), ConfigError);
  EXPECT_THROW(FeatureMap::parse({"sin(t)"}), ConfigError);
  EXPECT_THROW(FeatureMap::parse({}), ConfigError);
}

TEST(Model, ParameterCount) {
  const Shape s{20, 3, 35, 4};
  EXPECT_EQ(s.input(), 23);
  EXPECT_EQ(s.complex_parameters(), 3396u);
  EXPECT_EQ(s.real_parameters(), 6792u);
}

TEST(Model, SeededInitIsReproducible) {
  const SmallInstance inst;
  const Model a = init_model(inst.shape(), poly3(), 42);
  const Model b = init_model(inst.shape(), poly3(), 42);
  const Model c = init_model(inst.shape(), poly3(), 43);
  EXPECT_EQ(flatten(a), flatten(b));
  EXPECT_NE(flatten(a), flatten(c));
  for (const auto& bias : a.b) EXPECT_EQ(bias.norm(), 0.0);
  Model d = a;
  unflatten(flatten(c), d);
  EXPECT_EQ(flatten(d), flatten(c));
}

TEST(Model, ZeroVarianceGivesBiasComposition) {
  const SmallInstance inst;
  Model m = init_model(inst.shape(), poly3(), 1, 0.0);
  const Eigen::VectorXd bits = Eigen::VectorXd::Ones(4);
  EXPECT_EQ(forward_amplitude(m, bits, 0.3), cplx(0.0));
  m.b[0].setConstant(cplx(0.3, -0.2));
  m.b[2].setConstant(cplx(0.1, 0.4));
  EXPECT_EQ(forward_amplitude(m, bits, 0.3), cplx(0.1, 0.4));
  const auto rho = rdt_eval(placed(init_model(inst.shape(), poly3(), 1, 0.0), 0.0, 1.0), inst.basis, 0.5);
  EXPECT_EQ(rho.values.norm(), 0.0);
}

TEST(Model, SingleLayerIsAffine) {
  const SmallInstance inst;
  const Model m = init_model(inst.shape(5, 1), poly3(), 9);
  Eigen::VectorXd bits(4);
  bits << 1, 0, 1, 1;
  const double t = 0.37;
  Eigen::VectorXd in(7);
  in << bits, t, t * t, t * t * t;
  const cplx expect = (m.W[0] * in.cast<cplx>())(0) + m.b[0](0);
  EXPECT_NEAR(std::abs(forward_amplitude(m, bits, t) - expect), 0.0, 1e-15);
  EXPECT_EQ(forward_amplitude(m, bits, t), forward_amplitude(m, bits, t));
}

TEST(Model, ActivationAtZero) { EXPECT_EQ(activation(cplx(0.0)), cplx(0.5)); }

TEST(Model, SymmetryIdentityHoldsExactly) {
  const Problem p = assemble(anderson_defaults(3.0));
  const Shape s{2 * 2 + 2 * p.basis.ne(), 3, 8, 3};
  const Model m = placed(init_model(s, poly3(), 5), 0.0, 0.3);
  for (double t : {0.0, 0.11, 0.3}) {
    const auto rho = rdt_eval(m, p.basis, t).values;
    ASSERT_EQ(static_cast<std::size_t>(rho.size()), p.basis.size());
    for (std::size_t i = 0; i < p.basis.size(); ++i) {
      const cplx mirrored = p.basis.phase(i) * std::conj(rho(static_cast<Eigen::Index>(p.basis.partner(i))));
      EXPECT_EQ(rho(static_cast<Eigen::Index>(i)), mirrored);
    }
    for (auto i : p.basis.vacuum_diagonal()) EXPECT_EQ(rho(static_cast<Eigen::Index>(i)).imag(), 0.0);
    EXPECT_EQ(dqme::hermiticity_residual(p.basis, rho), 0.0);
  }
}

TEST(Model, DerivativeOfLinearFeatureIsExact) {
  const SmallInstance inst;
  Model m = placed(init_model(inst.shape(5, 1), poly3(), 2), 0.0, 1.0);
  m.W[0](0, 5) = 0.0;
  m.W[0](0, 6) = 0.0;
  const cplx w = m.W[0](0, 4);
  const auto inputs = state_inputs(inst.basis);
  for (double t : {0.0, 0.5, 1.0}) {
    const auto d = rdt_time_derivative(m, inst.basis, inputs, t, 1e-3).values;
    for (std::size_t i = 0; i < inst.basis.size(); ++i) {
      const cplx expect = w + inst.basis.phase(i) * std::conj(w);
      EXPECT_NEAR(std::abs(d(static_cast<Eigen::Index>(i)) - expect), 0.0, 1e-12);
    }
  }
}

TEST(Model, DerivativeMatchesFivePointStencil) {
  const SmallInstance inst;
  const Model m = placed(init_model(inst.shape(), poly3(), 3), 0.0, 1.0);
  const auto inputs = state_inputs(inst.basis);
  const double t = 0.4, h = 1e-3;
  auto at = [&](double x) { return rdt_eval(m, inst.basis, inputs, x).values; };
  const Eigen::VectorXcd five = (at(t - 2 * h) - 8.0 * at(t - h) + 8.0 * at(t + h) - at(t + 2 * h)) / (12.0 * h);
  const Eigen::VectorXcd d = rdt_time_derivative(m, inst.basis, inputs, t, 1e-5).values;
  EXPECT_LE((d - five).norm() / five.norm(), 1e-6);
  // Default step 1.5e-9 stays within round-off amplification of the same value.
  const Eigen::VectorXcd d0 = rdt_time_derivative(m, inst.basis, inputs, t, LossOptions{}.dt).values;
  EXPECT_LE((d0 - five).norm() / five.norm(), 1e-5);
}

TEST(Model, OneSidedDerivativeAtBoundaries) {
  const SmallInstance inst;
  const Model m = placed(init_model(inst.shape(), poly3(), 4), 0.2, 0.5);
  const auto inputs = state_inputs(inst.basis);
  auto at = [&](double x) { return rdt_eval(m, inst.basis, inputs, x).values; };
  for (double t : {0.2, 0.5}) {
    const double h = 1e-3;
    const double s = t < 0.3 ? 1.0 : -1.0;
    const Eigen::VectorXcd ref =
        s * (-25.0 * at(t) + 48.0 * at(t + s * h) - 36.0 * at(t + 2 * s * h) + 16.0 * at(t + 3 * s * h) -
             3.0 * at(t + 4 * s * h)) / (12.0 * h);
    const Eigen::VectorXcd d = rdt_time_derivative(m, inst.basis, inputs, t, 1e-5).values;
    EXPECT_LE((d - ref).norm() / ref.norm(), 1e-6);
  }
  EXPECT_THROW(rdt_eval(m, inst.basis, inputs, 0.1), DimensionError);
}

TEST(Loss, StationaryExactCaseIsZero) {
  const auto basis = dqme::enumerate_basis(1, 1, 1);
  const dqme::Liouvillian L0(basis.size(), {}, 1);
  Model m = placed(init_model({4, 3, 5, 1}, poly3(), 1, 0.0), 0.0, 0.2);
  m.b[0](0) = 0.25;
  const auto target = rdt_eval(m, basis, 0.0).values;
  const SubdomainLoss loss(basis, L0, grid(0.0, 0.2, 5), target, 0.0, 0.2);
  Eigen::VectorXd g;
  const auto r = loss.eval_with_gradient(m, g);
  EXPECT_EQ(r.l_r, 0.0);
  EXPECT_EQ(r.l_i, 0.0);
  EXPECT_EQ(r.l_tr, 0.0);
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(Loss, WeightsActLinearly) {
  const SmallInstance inst;
  const Model m = placed(init_model(inst.shape(), poly3(), 11), 0.0, 0.3);
  const Model other = placed(init_model(inst.shape(), poly3(), 12), 0.0, 0.3);
  const auto target = rdt_eval(other, inst.basis, 0.0).values;
  const auto pts = grid(0.0, 0.3, 7);
  LossOptions o;
  o.dt = 1e-4;
  auto make = [&](double wr, double wi, double wt) {
    LossOptions x = o;
    x.w_residual = wr;
    x.w_initial = wi;
    x.w_trace = wt;
    return SubdomainLoss(inst.basis, inst.L, pts, target, 0.0, 0.3, x);
  };
  const auto base = make(0.2, 0.8, 20.0).eval(m);
  const auto doubled = make(0.2, 0.8, 40.0).eval(m);
  EXPECT_NEAR(doubled.total - base.total, 20.0 * base.l_tr, 1e-12 * base.total);
  EXPECT_EQ(doubled.l_r, base.l_r);
  EXPECT_EQ(doubled.l_i, base.l_i);

  Eigen::VectorXd g, gr, gi, gt;
  make(0.2, 0.8, 20.0).eval_with_gradient(m, g);
  make(0.2, 0.0, 0.0).eval_with_gradient(m, gr);
  make(0.0, 0.8, 0.0).eval_with_gradient(m, gi);
  make(0.0, 0.0, 20.0).eval_with_gradient(m, gt);
  EXPECT_LE((g - gr - gi - gt).norm(), 1e-12 * g.norm());
}

TEST(Loss, LambdaZeroIsPlainNorm) {
  const SmallInstance inst;
  const Model m = placed(init_model(inst.shape(), poly3(), 13), 0.0, 0.3);
  const Eigen::VectorXcd target = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(inst.basis.size()));
  LossOptions o;
  o.lambda = 0.0;
  const SubdomainLoss loss(inst.basis, inst.L, {0.1}, target, 0.0, 0.3, o);
  EXPECT_NEAR(loss.eval(m).l_i, rdt_eval(m, inst.basis, 0.0).values.squaredNorm(), 1e-14);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  const SmallInstance inst;
  LossOptions o;
  o.dt = 1e-3;
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const Model m = placed(init_model(inst.shape(), poly3(), 100 + draw), 0.1, 0.4);
    const Model prev = placed(init_model(inst.shape(), poly3(), 200 + draw), 0.1, 0.4);
    const SubdomainLoss loss(inst.basis, inst.L, grid(0.1, 0.4, 6), rdt_eval(prev, inst.basis, 0.1).values, 0.1, 0.4,
                             o);
    Eigen::VectorXd g;
    ASSERT_TRUE(loss.eval_with_gradient(m, g).finite);
    const Eigen::VectorXd fd = finite_difference_gradient(loss, m, 1e-6);
    worst = std::max(worst, (g - fd).norm() / g.norm());
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Loss, PermutationOfResidualPoints) {
  const SmallInstance inst;
  const Model m = placed(init_model(inst.shape(), poly3(), 21), 0.0, 0.3);
  auto pts = grid(0.0, 0.3, 9);
  const Eigen::VectorXcd target = rdt_eval(m, inst.basis, 0.0).values * 0.9;
  const double a = SubdomainLoss(inst.basis, inst.L, pts, target, 0.0, 0.3).eval(m).total;
  std::mt19937_64 rng(1);
  std::shuffle(pts.begin(), pts.end(), rng);
  const double b = SubdomainLoss(inst.basis, inst.L, pts, target, 0.0, 0.3).eval(m).total;
  EXPECT_NEAR(a, b, 1e-12 * a);
}

TEST(Loss, ThreadCountDoesNotChangeResults) {
  const SmallInstance inst;
  const Model m = placed(init_model(inst.shape(), poly3(), 31), 0.0, 0.3);
  const SubdomainLoss loss(inst.basis, inst.L, grid(0.0, 0.3, 11), rdt_eval(m, inst.basis, 0.0).values, 0.0, 0.3);
  Eigen::VectorXd g1, g3;
  const auto r1 = loss.eval_with_gradient(m, g1, 1);
  const auto r3 = loss.eval_with_gradient(m, g3, 3);
  EXPECT_EQ(r1.total, r3.total);
  EXPECT_EQ(g1, g3);
}

TEST(Loss, GuardsAndNonFinite) {
  const SmallInstance inst;
  const Eigen::VectorXcd target = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(inst.basis.size()));
  const Model zero = placed(init_model(inst.shape(), poly3(), 1, 0.0), 0.0, 0.3);
  const SubdomainLoss loss(inst.basis, inst.L, {0.0, 0.1}, target, 0.0, 0.3);
  EXPECT_THROW(loss.eval(zero), DivisionGuardError);

  Model overflow = placed(init_model(inst.shape(5, 2), poly3(), 1, 0.0), 0.0, 0.3);
  overflow.W[1].setConstant(1e308);
  const auto r = loss.eval(overflow);
  EXPECT_FALSE(r.finite);
  EXPECT_TRUE(std::isinf(r.total));

  EXPECT_THROW(SubdomainLoss(inst.basis, inst.L, {0.5}, target, 0.0, 0.3), ConfigError);
}
