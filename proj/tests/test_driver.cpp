#include <cmath>

#include <gtest/gtest.h>

#include "dqpinn/driver/metric.hpp"
#include "dqpinn/driver/schedule.hpp"
#include "dqpinn/driver/train.hpp"
#include "dqpinn/problem.hpp"

using namespace dqpinn;
using namespace dqpinn::driver;

namespace {

reference::Trajectory constant_trajectory(double value, double t0, double t1, int n) {
  reference::Trajectory tr;
  for (int i = 0; i <= n; ++i) {
    reference::TrajectoryRecord r;
    r.t = t0 + (t1 - t0) * i / n;
    r.n_up = value;
    r.current_r = value;
    tr.rows.push_back(r);
  }
  return tr;
}

reference::Trajectory sine_trajectory(double scale, double phase, int n) {
  reference::Trajectory tr;
  for (int i = 0; i <= n; ++i) {
    reference::TrajectoryRecord r;
    r.t = 2.0 * i / n;
    r.n_up = scale * (1.0 + 0.5 * std::sin(3.0 * r.t + phase));
    tr.rows.push_back(r);
  }
  return tr;
}

SubdomainPlan single_stage(double a, double b, double spacing, double target, int iters) {
  SubdomainPlan s;
  s.t_start = a;
  s.t_end = b;
  s.features = pinn::FeatureMap::parse({"t", "t^2", "t^3"});
  s.stages = {{spacing, target, iters, 0}};
  return s;
}

// Spinless level with one discrete bath level (12 states).
struct Small {
  dqme::RdtBasis basis = dqme::enumerate_basis(1, 1, 1);
  dqme::Liouvillian L;
  Eigen::VectorXcd rho0;
  Small() {
    const auto levels =
        dqme::pair_levels(reference::discrete_level_modes({{0.4, cplx(0.5, 0.0), 0, 0}}, 1.0, 0.0));
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(2, 2);
    h(1, 1) = 0.3;
    L = dqme::build_liouvillian(h, levels, basis, dqme::selected_convention().selected, 1);
    Eigen::MatrixXcd rs = Eigen::MatrixXcd::Zero(2, 2);
    rs(0, 0) = 0.2;
    rs(1, 1) = 0.8;
    rho0 = dqme::embed_system_state(basis, rs);
  }
};

}  // namespace

TEST(Plan, UniformWidth) {
  const auto b = plan_subdomains(2.3, 0.23);
  ASSERT_EQ(b.size(), 11u);
  EXPECT_EQ(b.front(), 0.0);
  EXPECT_EQ(b.back(), 2.3);
  for (std::size_t i = 1; i < b.size(); ++i) EXPECT_GT(b[i], b[i - 1]);
  EXPECT_NO_THROW(validate_boundaries({0.0, 0.228}));
  EXPECT_NO_THROW(validate_boundaries({0.3, 0.4}));
  EXPECT_NO_THROW(validate_boundaries({1.44, 1.67}));
  EXPECT_THROW(validate_boundaries({0.0, 0.3, 0.2}), ConfigError);
  EXPECT_THROW(plan_subdomains(-1.0, 0.1), ConfigError);
}

TEST(Plan, ResidualPointSpacing) {
  const auto pts = uniform_points(0.0, 0.23, 0.015);
  EXPECT_EQ(pts.size(), 17u);
  EXPECT_EQ(pts.front(), 0.0);
  EXPECT_EQ(pts.back(), 0.23);
  EXPECT_LE(mean_spacing(pts), 0.015);
  EXPECT_GT(mean_spacing(pts), 0.014);
}

TEST(Plan, RefinementIsDenserSuperset) {
  const double a = 0.0, b = 0.228;
  auto s1 = uniform_points(a, b, 0.03);
  auto s2 = refine_points(s1, a, b, 0.023, 0, 0.0);
  auto s3 = refine_points(s2, a, b, 0.019, 3, 0.01);
  for (const auto* pair : {&s1, &s2}) {
    const auto& next = pair == &s1 ? s2 : s3;
    for (double t : *pair) EXPECT_NE(std::find(next.begin(), next.end(), t), next.end());
    EXPECT_LT(mean_spacing(next), mean_spacing(*pair));
  }
  EXPECT_LE(mean_spacing(s2), 0.023);
  EXPECT_LE(mean_spacing(s3), 0.019);
  EXPECT_TRUE(std::is_sorted(s3.begin(), s3.end()));
  EXPECT_NE(std::find(s3.begin(), s3.end(), 0.01), s3.end());
  for (double t : s3) EXPECT_TRUE(t >= a && t <= b);
}

TEST(Schedule, Validation) {
  TrainingSchedule s;
  s.subdomains = {single_stage(0.0, 0.1, 0.02, 1e-3, 10)};
  EXPECT_NO_THROW(s.validate());
  s.subdomains[0].stages.push_back({0.01, 1e-2, 10, 0});
  EXPECT_THROW(s.validate(), ConfigError);
  s.subdomains = {single_stage(0.0, 0.1, 0.02, 1e-3, 10), single_stage(0.2, 0.3, 0.02, 1e-3, 10)};
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Metric, IdenticalIsZero) {
  const auto a = sine_trajectory(1.0, 0.0, 50);
  EXPECT_EQ(relative_error_metric(a, a, Observable::kNUp, 0.0, 2.0), 0.0);
}

TEST(Metric, ConstantOffset) {
  const auto x = constant_trajectory(1.1, 0.0, 1.0, 10);
  const auto r = constant_trajectory(0.9, 0.0, 1.0, 7);
  EXPECT_NEAR(relative_error_metric(x, r, Observable::kNUp, 0.0, 1.0), 0.2, 1e-14);
}

TEST(Metric, SymmetricAndScaleInvariant) {
  const auto a = sine_trajectory(1.0, 0.0, 40);
  const auto b = sine_trajectory(1.0, 0.3, 40);
  const auto a3 = sine_trajectory(3.0, 0.0, 40);
  const auto b3 = sine_trajectory(3.0, 0.3, 40);
  const double e = relative_error_metric(a, b, Observable::kNUp, 0.0, 2.0);
  EXPECT_GT(e, 0.0);
  EXPECT_EQ(e, relative_error_metric(b, a, Observable::kNUp, 0.0, 2.0));
  EXPECT_NEAR(e, relative_error_metric(a3, b3, Observable::kNUp, 0.0, 2.0), 1e-14);
}

TEST(Metric, Errors) {
  const auto z = constant_trajectory(0.0, 0.0, 1.0, 4);
  EXPECT_THROW(relative_error_metric(z, z, Observable::kNUp, 0.0, 1.0), DivisionGuardError);
  EXPECT_THROW(relative_error_metric(z, z, Observable::kNUp, 0.0, 2.0), ConfigError);
  EXPECT_EQ(parse_observable("I_R"), Observable::kCurrentR);
  EXPECT_THROW(parse_observable("x"), ConfigError);
}

TEST(Staged, TrivialGeneratorReachesTarget) {
  const auto basis = dqme::enumerate_basis(1, 1, 1);
  const dqme::Liouvillian L0(basis.size(), {}, 1);
  Eigen::MatrixXcd rs = Eigen::MatrixXcd::Zero(2, 2);
  rs(0, 0) = 0.5;
  rs(1, 1) = 0.5;
  const Eigen::VectorXcd target = dqme::embed_system_state(basis, rs);
  pinn::Model m = pinn::init_model({4, 3, 6, 3}, pinn::FeatureMap::parse({"t", "t^2", "t^3"}), 3);
  pinn::LossOptions lo;
  lo.dt = 1e-4;
  const auto plan = single_stage(0.0, 0.2, 0.05, 1e-2, 500);
  const auto [model, rep] = staged_train_subdomain(m, basis, L0, plan, target, lo, {});
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.stages[0].status, optim::Termination::kLossTarget);
  EXPECT_LE(rep.stages[0].final_loss, 1e-2);
  EXPECT_LT(rep.stages[0].final_loss, rep.stages[0].initial_loss);
  // The tier-0 initial term alone bounds the deviation of the vacuum element at t_0.
  const double dev = std::abs(pinn::rdt_eval(model, basis, 0.0).values(0) - target(0));
  EXPECT_LE(dev, std::sqrt(rep.stages[0].final_loss / lo.w_initial));
}

TEST(FullHorizon, SingleSubdomainMatchesStagedTraining) {
  const Small s;
  TrainingSchedule sch;
  sch.loss.dt = 1e-4;
  sch.subdomains = {single_stage(0.0, 0.2, 0.05, 1e-12, 15)};
  NetworkConfig net{6, 3, 11};
  const auto run = train_full_horizon(s.basis, s.L, s.rho0, sch, net, 0.05, true);
  const pinn::Shape shape{4, 3, 6, 3};
  const auto [model, rep] = staged_train_subdomain(pinn::init_model(shape, sch.subdomains[0].features, 11), s.basis,
                                                   s.L, sch.subdomains[0], s.rho0, sch.loss, sch.optimizer);
  ASSERT_EQ(run.models.size(), 1u);
  EXPECT_EQ(pinn::flatten(run.models[0]), pinn::flatten(model));
  EXPECT_EQ(run.reports[0].stages[0].final_loss, rep.stages[0].final_loss);
  ASSERT_EQ(run.trajectory.rows.size(), 5u);
  EXPECT_EQ(run.trajectory.rows.back().t, 0.2);
}

TEST(FullHorizon, FailureStopsUnlessOverridden) {
  const Small s;
  TrainingSchedule sch;
  sch.loss.dt = 1e-4;
  sch.subdomains = {single_stage(0.0, 0.1, 0.05, 1e-30, 3), single_stage(0.1, 0.2, 0.05, 1e-30, 3)};
  NetworkConfig net{5, 2, 1};
  const auto stop = train_full_horizon(s.basis, s.L, s.rho0, sch, net, 0.05, false);
  EXPECT_EQ(stop.models.size(), 1u);
  EXPECT_FALSE(stop.completed);
  EXPECT_EQ(stop.t_end, 0.1);
  EXPECT_EQ(stop.trajectory.rows.back().t, 0.1);
  const auto cont = train_full_horizon(s.basis, s.L, s.rho0, sch, net, 0.05, true);
  EXPECT_EQ(cont.models.size(), 2u);
  EXPECT_TRUE(cont.completed);
  EXPECT_FALSE(cont.all_passed);
  EXPECT_EQ(cont.models[1].t_start, 0.1);
}

TEST(FullHorizon, InitialOverrideAndContinuity) {
  const Small s;
  TrainingSchedule sch;
  sch.loss.dt = 1e-4;
  sch.subdomains = {single_stage(0.0, 0.1, 0.025, 1e-7, 400), single_stage(0.1, 0.2, 0.025, 1e-7, 400)};
  NetworkConfig net{6, 3, 4};
  const auto run = train_full_horizon(s.basis, s.L, s.rho0, sch, net, 0.025, true);
  ASSERT_TRUE(run.completed);
  const double left = pinn::rdt_eval(run.models[0], s.basis, 0.1).values(0).real();
  const double right = pinn::rdt_eval(run.models[1], s.basis, 0.1).values(0).real();
  // Continuity is enforced only through the initial term of the second subdomain.
  EXPECT_LE(std::abs(left - right), std::sqrt(run.reports[1].stages[0].final_loss / sch.loss.w_initial));

  reference::PropagateOptions po;
  po.dt = 1e-3;
  po.horizon = 0.2;
  po.output_dt = 0.025;
  const auto ref = reference::propagate_reference(s.L, s.basis, {0.0, s.rho0}, po);
  const double trained = relative_error_metric(run.trajectory, ref, Observable::kNUp, 0.0, 0.2);

  bool asked = false;
  const auto inj = [&](int p) -> std::optional<Eigen::VectorXcd> {
    if (p != 1) return std::nullopt;
    asked = true;
    return s.rho0;
  };
  sch.subdomains[0].stages[0].max_iterations = 1;
  sch.subdomains[1].stages[0].max_iterations = 1;
  const auto brief = train_full_horizon(s.basis, s.L, s.rho0, sch, net, 0.025, true, {}, inj);
  EXPECT_LT(trained, relative_error_metric(brief.trajectory, ref, Observable::kNUp, 0.0, 0.2));
  EXPECT_TRUE(asked);
}
