#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dqpinn/problem.hpp"
#include "dqpinn/reference.hpp"

using namespace dqpinn;
using namespace dqpinn::dqme;
using reference::DiscreteLevel;

namespace {

Eigen::MatrixXcd level_hamiltonian(double eps) {
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(2, 2);
  h(1, 1) = eps;
  return h;
}

Eigen::MatrixXcd occupied_state(double p) {
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(2, 2);
  r(0, 0) = 1.0 - p;
  r(1, 1) = p;
  return r;
}

ProblemSpec spinless_two_reservoirs(int m_max) {
  ProblemSpec p = anderson_defaults(3.0);
  p.system.ns = 1;
  p.system.eps0 = 0.5;
  p.system.d_eps = -1.0;
  p.bath.n_orbitals = 1;
  for (auto& r : p.bath.reservoirs) r.coupling = {0.5};
  p.bath.pade_order = 1;
  p.m_max = m_max;
  return p;
}

std::vector<double> n_up_series(const Problem& p, double horizon, double output_dt) {
  reference::PropagateOptions po;
  po.horizon = horizon;
  po.output_dt = output_dt;
  std::vector<double> out;
  for (const auto& r : reference::propagate_reference(p.L, p.basis, p.rho0, po).rows) out.push_back(r.n_up);
  return out;
}

}  // namespace

TEST(Rk4, ZeroGeneratorLeavesStateUnchanged) {
  const auto basis = enumerate_basis(1, 0, 0);
  const Liouvillian L(basis.size(), {}, 1);
  RdtVector rho{0.0, Eigen::VectorXcd::Constant(4, cplx(0.3, 0.2))};
  const auto next = reference::rk4_step(L, rho, 0.1);
  EXPECT_EQ(next.values, rho.values);
  EXPECT_DOUBLE_EQ(next.time, 0.1);
}

TEST(Rk4, ScalarExponential) {
  reference::Rk4 rk;
  Eigen::VectorXcd x = Eigen::VectorXcd::Ones(1);
  rk.step([](const Eigen::VectorXcd& a, Eigen::VectorXcd& b) { b = -a; }, x, 0.1);
  EXPECT_NEAR(x(0).real(), std::exp(-0.1), 1e-7);
  EXPECT_THROW(rk.step([](const Eigen::VectorXcd& a, Eigen::VectorXcd& b) { b = -a; }, x, 0.0), StepError);
}

TEST(Rk4, Linearity) {
  const Problem p = assemble(spinless_two_reservoirs(2));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d;
  Eigen::VectorXcd a(static_cast<Eigen::Index>(p.basis.size())), b(a.size());
  for (auto& v : a) v = cplx(d(rng), d(rng));
  for (auto& v : b) v = cplx(d(rng), d(rng));
  const cplx ca(0.7, -0.1), cb(-1.3, 0.4);
  const auto step = [&](const Eigen::VectorXcd& x) { return reference::rk4_step(p.L, {0.0, x}, 0.01).values; };
  EXPECT_LE((step(ca * a + cb * b) - ca * step(a) - cb * step(b)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Rk4, RichardsonOrderFour) {
  const Problem p = assemble(spinless_two_reservoirs(2));
  const auto run = [&](double dt) {
    reference::Rk4 rk;
    Eigen::VectorXcd x = p.rho0.values;
    const int n = static_cast<int>(std::lround(1.0 / dt));
    for (int i = 0; i < n; ++i) rk.step([&](const Eigen::VectorXcd& a, Eigen::VectorXcd& y) { p.L.apply(a, y); }, x, dt);
    return x;
  };
  const Eigen::VectorXcd fine = run(0.02 / 16.0);
  const double e1 = (run(0.02) - fine).norm();
  const double e2 = (run(0.01) - fine).norm();
  const double ratio = e1 / e2;
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
}

TEST(Propagate, UnitaryCoherenceMagnitude) {
  const auto basis = enumerate_basis(1, 0, 0);
  const Liouvillian L = build_liouvillian(level_hamiltonian(1.3), {}, basis, selected_convention().selected, 1);
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(2, 2);
  r(0, 0) = r(1, 1) = 0.5;
  r(1, 0) = r(0, 1) = 0.5;
  reference::PropagateOptions po;
  po.horizon = 2.0;
  po.output_dt = 0.1;
  po.keep_snapshots = true;
  const auto traj = reference::propagate_reference(L, basis, {0.0, embed_system_state(basis, r)}, po);
  const auto coh = *basis.find(1u);
  for (const auto& s : traj.snapshots) EXPECT_NEAR(std::abs(s.values(static_cast<Eigen::Index>(coh))), 0.5, 1e-10);
}

TEST(Propagate, AndersonHighTemperatureTraceAndHermiticity) {
  const Problem p = assemble(anderson_defaults(3.0));
  reference::PropagateOptions po;
  po.output_dt = 0.05;
  po.keep_snapshots = true;
  const auto traj = reference::propagate_reference(p.L, p.basis, p.rho0, po);
  ASSERT_EQ(traj.size(), 47u);
  double drift = 0.0, herm = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    drift = std::max(drift, std::abs(traj.rows[i].trace - traj.rows[0].trace));
    herm = std::max(herm, hermiticity_residual(p.basis, traj.snapshots[i].values));
    if (i) {
      EXPECT_GT(traj.rows[i].t, traj.rows[i - 1].t);
    }
  }
  EXPECT_LE(drift, 1e-8);
  EXPECT_LE(herm, 1e-8);
}

TEST(Propagate, StepSizeAudit) {
  const Problem p = assemble(spinless_two_reservoirs(2));
  reference::PropagateOptions po;
  po.horizon = 1.0;
  po.output_dt = 0.1;
  EXPECT_LT(reference::step_size_audit(p.L, p.basis, p.rho0, po), 1e-8);
}

TEST(Propagate, RejectsIncommensurateGrid) {
  const Problem p = assemble(spinless_two_reservoirs(1));
  reference::PropagateOptions po;
  po.output_dt = 0.0107;
  EXPECT_THROW(reference::propagate_reference(p.L, p.basis, p.rho0, po), ConfigError);
}

TEST(Current, SumEqualsParticleNumberRate) {
  const Problem p = assemble(anderson_defaults(3.0));
  reference::PropagateOptions po;
  po.horizon = 1.0;
  po.output_dt = 0.25;
  po.keep_snapshots = true;
  const auto traj = reference::propagate_reference(p.L, p.basis, p.rho0, po);
  // Five-point stencil on RK4 sub-steps around each snapshot.
  const double h = 1e-3;
  double worst = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const auto& x = traj.snapshots[i];
    auto n_at = [&](int k) {
      // Negative k integrates backward with the negated generator.
      const double sign = k < 0 ? -1.0 : 1.0;
      Eigen::VectorXcd y = x.values;
      reference::Rk4 rk;
      for (int j = 0; j < std::abs(k); ++j)
        rk.step([&](const Eigen::VectorXcd& a, Eigen::VectorXcd& out) { p.L.apply(a, out), out *= sign; }, y, h);
      return total_occupation(p.basis, y).value;
    };
    const double dndt = (n_at(-2) - 8.0 * n_at(-1) + 8.0 * n_at(1) - n_at(2)) / (12.0 * h);
    const double sum = traj.rows[i].current_l + traj.rows[i].current_r;
    worst = std::max(worst, std::abs(sum - dndt));
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(Current, SteadyStateBalance) {
  const Problem p = assemble(spinless_two_reservoirs(2));
  reference::Rk4 rk;
  Eigen::VectorXcd x = p.rho0.values;
  for (int i = 0; i < 8000; ++i) rk.step([&](const Eigen::VectorXcd& a, Eigen::VectorXcd& y) { p.L.apply(a, y); }, x, 5e-3);
  const double il = reservoir_current(p.L, p.basis, x, 0).value;
  const double ir = reservoir_current(p.L, p.basis, x, 1).value;
  EXPECT_GT(std::abs(il), 1e-3);
  EXPECT_LE(std::abs(il + ir), 1e-6);
}

TEST(Truncation, HighTemperatureConvergesWithTierDepth) {
  std::vector<std::vector<double>> series;
  for (int m = 1; m <= 4; ++m) {
    ProblemSpec spec = anderson_defaults(3.0);
    spec.m_max = m;
    series.push_back(n_up_series(assemble(spec), 2.3, 0.1));
  }
  std::vector<double> diffs;
  for (std::size_t k = 1; k < series.size(); ++k) {
    double d = 0.0;
    for (std::size_t i = 0; i < series[k].size(); ++i) d = std::max(d, std::abs(series[k][i] - series[k - 1][i]));
    diffs.push_back(d);
  }
  for (std::size_t k = 1; k < diffs.size(); ++k) EXPECT_LT(diffs[k], diffs[k - 1]);
}

TEST(Oracle, ZeroCouplingIsVonNeumann) {
  Eigen::MatrixXcd r = occupied_state(0.4);
  r(0, 1) = 0.2;
  r(1, 0) = 0.2;
  const auto out = reference::discrete_bath_oracle(level_hamiltonian(0.8), r, {{0.3, 0.0, 0, 0}}, 1.0, 0.0,
                                                   {0.0, 0.5, 1.0});
  for (const auto& occ : out.occupations) EXPECT_NEAR(occ[0], 0.4, 1e-13);
}

TEST(Oracle, ResonantRabiOscillation) {
  const double g = 0.7;
  std::vector<double> times;
  for (int k = 0; k <= 20; ++k) times.push_back(0.1 * k);
  const auto out = reference::discrete_bath_oracle(level_hamiltonian(0.0), occupied_state(1.0), {{0.0, g, 0, 0}},
                                                   std::numeric_limits<double>::infinity(), -1.0, times);
  for (std::size_t i = 0; i < times.size(); ++i)
    EXPECT_NEAR(out.occupations[i][0], std::pow(std::cos(g * times[i]), 2), 1e-12);
}

TEST(Oracle, ConservesParticleNumberAndTrace) {
  const std::vector<DiscreteLevel> lv{{0.7, cplx(0.6, 0.1), 0, 0}, {-0.4, 0.5, 0, 0}, {1.1, 0.3, 0, 1}};
  const auto out = reference::discrete_bath_oracle(level_hamiltonian(0.2), occupied_state(0.7), lv, 1.5, 0.1,
                                                   {0.0, 0.7, 1.9, 4.0});
  for (std::size_t i = 0; i < out.times.size(); ++i) {
    EXPECT_NEAR(out.trace[i], 1.0, 1e-12);
    EXPECT_NEAR(out.n_everything[i], out.n_everything[0], 1e-12);
  }
}

TEST(Oracle, PermutationInvariant) {
  std::vector<DiscreteLevel> lv{{0.7, 0.6, 0, 0}, {-0.4, 0.5, 0, 0}, {0.2, 0.35, 0, 0}};
  const std::vector<double> times{0.0, 0.5, 1.5, 3.0};
  const auto a = reference::discrete_bath_oracle(level_hamiltonian(0.3), occupied_state(0.6), lv, 2.0, 0.1, times);
  std::reverse(lv.begin(), lv.end());
  const auto b = reference::discrete_bath_oracle(level_hamiltonian(0.3), occupied_state(0.6), lv, 2.0, 0.1, times);
  for (std::size_t i = 0; i < times.size(); ++i) EXPECT_NEAR(a.occupations[i][0], b.occupations[i][0], 1e-12);
}

TEST(Oracle, CapacityError) {
  std::vector<DiscreteLevel> lv(12, DiscreteLevel{0.1, 0.1, 0, 0});
  EXPECT_THROW(reference::discrete_bath_oracle(level_hamiltonian(0.0), occupied_state(1.0), lv, 1.0, 0.0, {0.0}),
               CapacityError);
}

TEST(Oracle, DqmeMatchesSpinlessTwoLevelBath) {
  const std::vector<DiscreteLevel> lv{{0.7, 0.6, 0, 0}, {-0.4, 0.5, 0, 0}};
  const auto cmp = compare_with_discrete_bath(level_hamiltonian(0.5), occupied_state(0.7), lv, 2.0, 0.3, 4);
  EXPECT_LE(cmp.max_error, 1e-4);
  EXPECT_GT(cmp.horizon, 0.0);
}

TEST(Oracle, DqmeMatchesSpinfulBath) {
  const SearchInstance inst;
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(4, 4);
  for (int n = 0; n < 4; ++n) r(n, n) = inst.populations[static_cast<std::size_t>(n)];
  const std::vector<DiscreteLevel> lv{{0.7, 0.6, 0, 0}, {-0.4, 0.5, 0, 0}, {0.3, 0.45, 1, 0}};
  const auto cmp = compare_with_discrete_bath(inst.hamiltonian(), r, lv, inst.beta, inst.mu, 6);
  EXPECT_LE(cmp.max_error, 1e-4);
}
