#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dqpinn/driver/schedule.hpp"
#include "dqpinn/dqme/basis.hpp"
#include "dqpinn/dqme/liouvillian.hpp"
#include "dqpinn/errors.hpp"
#include "dqpinn/optim/bfgs.hpp"
#include "dqpinn/optim/warm_start.hpp"
#include "dqpinn/pinn/loss.hpp"
#include "dqpinn/pinn/model.hpp"
#include "dqpinn/reference.hpp"

namespace dqpinn::driver {

struct StageReport {
  int stage = 0;
  std::size_t n_points = 0;
  double mean_spacing = 0.0;
  double target = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  optim::Termination status = optim::Termination::kMaxIterations;
  bool reached = false;
  double cusp_time = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> points;
  std::vector<optim::HistoryRow> history;
};

struct SubdomainReport {
  int index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<StageReport> stages;
  bool passed = false;
  double seconds = 0.0;
  // Model after each stage, kept for stage-by-stage comparisons.
  std::vector<pinn::Model> stage_models;
};

struct TrainOptions {
  int threads = 1;
  bool keep_stage_models = false;
  // Called after each BFGS iteration with (subdomain, stage, row).
  std::function<void(int, int, const optim::HistoryRow&)> on_iteration;
};

// Pointwise residual norm on an audit grid `factor` times finer than `spacing`; returns the argmax time.
inline double detect_cusp(const pinn::Model& m, const dqme::RdtBasis& basis, const dqme::Liouvillian& L, double a,
                          double b, double spacing, double dt, int factor = 10) {
  const Eigen::MatrixXd inputs = pinn::state_inputs(basis);
  const auto grid = uniform_points(a, b, spacing / factor);
  double best = -1.0, where = a;
  for (double t : grid) {
    const Eigen::VectorXcd rho = pinn::rdt_eval(m, basis, inputs, t).values;
    const Eigen::VectorXcd d = pinn::rdt_time_derivative(m, basis, inputs, t, dt).values;
    const double r = (d - L.apply(rho)).norm();
    if (r > best) {
      best = r;
      where = t;
    }
  }
  return where;
}

// BFGS objective over the real parametrization of `shape_model`; guard violations count as inadmissible points.
inline optim::Objective make_objective(const pinn::SubdomainLoss& loss, const pinn::Model& shape_model, int threads) {
  return [&loss, work = shape_model, threads](const Eigen::VectorXd& theta, Eigen::VectorXd& g) mutable {
    pinn::unflatten(theta, work);
    try {
      const auto r = loss.eval_with_gradient(work, g, threads);
      if (!r.finite) return optim::Evaluation{};
      return optim::Evaluation{r.total, {r.l_r, r.l_i, r.l_tr}};
    } catch (const DivisionGuardError&) {
      g.setConstant(std::numeric_limits<double>::quiet_NaN());
      return optim::Evaluation{};
    }
  };
}

// Runs the stages of one subdomain in order, refining the residual points between stages.
inline std::pair<pinn::Model, SubdomainReport> staged_train_subdomain(
    pinn::Model model, const dqme::RdtBasis& basis, const dqme::Liouvillian& L, const SubdomainPlan& plan,
    const Eigen::VectorXcd& initial_target, const pinn::LossOptions& loss_opts,
    const optim::OptimizerOptions& opt_base, const TrainOptions& topts = {}, int index = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  model.t_start = plan.t_start;
  model.t_end = plan.t_end;
  SubdomainReport rep;
  rep.index = index;
  rep.t_start = plan.t_start;
  rep.t_end = plan.t_end;
  std::vector<double> pts;
  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    const StagePlan& sp = plan.stages[k];
    StageReport sr;
    sr.stage = static_cast<int>(k);
    if (k == 0) {
      pts = uniform_points(plan.t_start, plan.t_end, sp.spacing);
      if (sp.cusp_extras > 0)
        pts = refine_points(pts, plan.t_start, plan.t_end, sp.spacing, sp.cusp_extras,
                            detect_cusp(model, basis, L, plan.t_start, plan.t_end, sp.spacing, loss_opts.dt));
    } else {
      const double tc = sp.cusp_extras > 0
                            ? detect_cusp(model, basis, L, plan.t_start, plan.t_end, sp.spacing, loss_opts.dt)
                            : std::numeric_limits<double>::quiet_NaN();
      sr.cusp_time = tc;
      pts = refine_points(pts, plan.t_start, plan.t_end, sp.spacing, sp.cusp_extras, tc);
    }
    sr.points = pts;
    sr.n_points = pts.size();
    sr.mean_spacing = mean_spacing(pts);
    sr.target = sp.target;

    const pinn::SubdomainLoss loss(basis, L, pts, initial_target, plan.t_start, plan.t_end, loss_opts);
    optim::OptimizerOptions oo = opt_base;
    oo.loss_target = sp.target;
    oo.max_iterations = sp.max_iterations;
    const auto cb = [&](const optim::HistoryRow& row) {
      if (topts.on_iteration) topts.on_iteration(index, static_cast<int>(k), row);
    };
    const auto res = optim::bfgs_minimize(make_objective(loss, model, topts.threads), pinn::flatten(model), oo, cb);
    pinn::unflatten(res.theta, model);
    sr.initial_loss = res.history.front().loss;
    sr.final_loss = res.value.value;
    sr.iterations = res.iterations;
    sr.status = res.status;
    sr.reached = res.value.value <= sp.target;
    sr.history = res.history;
    rep.stages.push_back(std::move(sr));
    if (topts.keep_stage_models) rep.stage_models.push_back(model);
  }
  rep.passed = rep.stages.back().reached;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(rep)};
}

struct NetworkConfig {
  int hidden = 35;
  int layers = 4;
  std::uint64_t seed = 1;
};

struct FullRun {
  std::vector<pinn::Model> models;
  std::vector<SubdomainReport> reports;
  reference::Trajectory trajectory;
  bool completed = false;  // every subdomain trained (passed, or continued under override)
  bool all_passed = false;
  double t_end = 0.0;      // end of the stitched trajectory
};

// Uniform grid t_0 + k * output_dt over [a, b], with b appended when the spacing does not divide the interval.
inline std::vector<double> output_grid(double a, double b, double output_dt) {
  if (!(output_dt > 0.0) || !(b >= a)) throw ConfigError("output grid: invalid interval or spacing");
  std::vector<double> g;
  const double tol = 1e-9 * std::max(1.0, std::abs(b));
  for (long k = 0;; ++k) {
    const double t = a + static_cast<double>(k) * output_dt;
    if (t >= b - tol) break;
    g.push_back(t);
  }
  g.push_back(b);
  return g;
}

// Stitched trajectory over [t_0, t_P]; each time uses the subdomain containing it.
inline reference::Trajectory stitch(const std::vector<pinn::Model>& models, const dqme::RdtBasis& basis,
                                    const dqme::Liouvillian& L, double output_dt) {
  reference::Trajectory tr;
  if (models.empty()) return tr;
  const Eigen::MatrixXd inputs = pinn::state_inputs(basis);
  std::size_t p = 0;
  for (double t : output_grid(models.front().t_start, models.back().t_end, output_dt)) {
    while (p + 1 < models.size() && t >= models[p].t_end) ++p;
    tr.rows.push_back(reference::observe(L, basis, pinn::rdt_eval(models[p], basis, inputs, t).values, t));
  }
  return tr;
}

// Trajectory of one model over [a, b], including evaluation beyond its training interval.
inline reference::Trajectory model_trajectory(const pinn::Model& m, const dqme::RdtBasis& basis,
                                              const dqme::Liouvillian& L, double a, double b, double output_dt) {
  reference::Trajectory tr;
  const Eigen::MatrixXd inputs = pinn::state_inputs(basis);
  for (double t : output_grid(a, b, output_dt))
    tr.rows.push_back(reference::observe(L, basis, pinn::rdt_eval(m, basis, inputs, t).values, t));
  return tr;
}

// Sequential subdomain training with warm starts. `initial_override(p)` may inject the initial target of
// subdomain p (otherwise the previous network's boundary output, or rho0 for p = 0).
inline FullRun train_full_horizon(const dqme::RdtBasis& basis, const dqme::Liouvillian& L, const Eigen::VectorXcd& rho0,
                                  const TrainingSchedule& schedule, const NetworkConfig& net, double output_dt,
                                  bool override_failure, const TrainOptions& topts = {},
                                  const std::function<std::optional<Eigen::VectorXcd>(int)>& initial_override = {}) {
  schedule.validate();
  FullRun run;
  const int nb = 2 * basis.layout().ns + 2 * basis.layout().ne;
  for (std::size_t p = 0; p < schedule.subdomains.size(); ++p) {
    const SubdomainPlan& plan = schedule.subdomains[p];
    pinn::Model start;
    Eigen::VectorXcd target;
    if (p == 0) {
      const pinn::Shape shape{nb, static_cast<int>(plan.features.size()), net.hidden, net.layers};
      start = pinn::init_model(shape, plan.features, net.seed);
      target = rho0;
    } else {
      const pinn::Model& prev = run.models.back();
      start = optim::warm_start_transfer(prev, plan.t_start, plan.t_end, plan.features, net.seed + p);
      target = pinn::rdt_eval(prev, basis, plan.t_start).values;
    }
    if (initial_override) {
      if (auto inj = initial_override(static_cast<int>(p))) target = *inj;
    }
    auto [model, rep] = staged_train_subdomain(std::move(start), basis, L, plan, target, schedule.loss,
                                               schedule.optimizer, topts, static_cast<int>(p));
    const bool passed = rep.passed;
    run.models.push_back(std::move(model));
    run.reports.push_back(std::move(rep));
    if (!passed && !override_failure) break;
  }
  run.completed = run.models.size() == schedule.subdomains.size();
  run.all_passed = run.completed;
  for (const auto& r : run.reports) run.all_passed = run.all_passed && r.passed;
  run.trajectory = stitch(run.models, basis, L, output_dt);
  run.t_end = run.models.empty() ? 0.0 : run.models.back().t_end;
  return run;
}

}  // namespace dqpinn::driver
