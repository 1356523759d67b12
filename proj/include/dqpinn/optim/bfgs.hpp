#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dqpinn/errors.hpp"

namespace dqpinn::optim {

struct OptimizerOptions {
  int max_iterations = 1000;
  double grad_tol = 1e-8;
  double loss_target = -std::numeric_limits<double>::infinity();
  double c1 = 1e-4;
  double c2 = 0.9;
  double initial_step = 1.0;
  int max_line_search = 40;

  void validate() const {
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw ConfigError("optimizer: need 0 < c1 < c2 < 1");
    if (max_iterations < 0 || max_line_search < 1 || !(initial_step > 0.0) || !(grad_tol >= 0.0))
      throw ConfigError("optimizer: invalid iteration limits or tolerances");
  }
};

// Objective value with optional loss components (reported in the history only).
struct Evaluation {
  double value = std::numeric_limits<double>::infinity();
  std::array<double, 3> parts{0.0, 0.0, 0.0};
};

// f(theta, grad_out); non-finite values mark an inadmissible point.
using Objective = std::function<Evaluation(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct HistoryRow {
  int iteration = 0;
  double loss = 0.0;
  std::array<double, 3> parts{0.0, 0.0, 0.0};
  double grad_norm = 0.0;
  double step = 0.0;
};

enum class Termination { kLossTarget, kGradientTolerance, kMaxIterations, kLineSearchFailure };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::kLossTarget: return "loss_target";
    case Termination::kGradientTolerance: return "gradient_tolerance";
    case Termination::kMaxIterations: return "max_iterations";
    case Termination::kLineSearchFailure: return "line_search_failure";
  }
  return "unknown";
}

struct BfgsResult {
  Eigen::VectorXd theta;
  Evaluation value;
  Eigen::VectorXd grad;
  int iterations = 0;
  Termination status = Termination::kMaxIterations;
  std::vector<HistoryRow> history;
  bool converged() const { return status == Termination::kLossTarget || status == Termination::kGradientTolerance; }
};

struct LineSearchResult {
  bool ok = false;
  double step = 0.0;
  Evaluation value;
  Eigen::VectorXd theta;
  Eigen::VectorXd grad;
};

namespace detail {

inline bool finite_eval(const Evaluation& e, const Eigen::VectorXd& g) { return std::isfinite(e.value) && g.allFinite(); }

// Minimizer of the cubic through (a, fa, da), (b, fb, db); falls back to bisection when ill-posed.
inline double cubic_min(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double x = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    const double margin = 0.1 * (hi - lo);
    if (std::isfinite(x) && x > lo + margin && x < hi - margin) return x;
  }
  return 0.5 * (a + b);
}

}  // namespace detail

// Strong-Wolfe line search (bracketing and zoom). The returned step satisfies both conditions.
inline LineSearchResult wolfe_line_search(const Objective& f, const Eigen::VectorXd& theta, const Evaluation& f0,
                                          const Eigen::VectorXd& g0, const Eigen::VectorXd& dir, double alpha0,
                                          const OptimizerOptions& opts) {
  const double d0 = g0.dot(dir);
  if (!(d0 < 0.0)) throw OptimizationError("line search: direction is not a descent direction");
  LineSearchResult out;
  int trials = 0;
  auto eval = [&](double a, LineSearchResult& r) {
    ++trials;
    r.step = a;
    r.theta = theta + a * dir;
    r.grad.resize(theta.size());
    r.value = f(r.theta, r.grad);
    return detail::finite_eval(r.value, r.grad);
  };
  auto armijo = [&](const LineSearchResult& r) { return r.value.value <= f0.value + opts.c1 * r.step * d0; };
  auto curvature = [&](const LineSearchResult& r) { return std::abs(r.grad.dot(dir)) <= -opts.c2 * d0; };

  // lo satisfies Armijo with the lowest value so far; hi bounds the bracket (possibly inadmissible).
  auto zoom = [&](LineSearchResult lo, LineSearchResult hi) -> LineSearchResult {
    while (trials < opts.max_line_search) {
      const bool hi_ok = detail::finite_eval(hi.value, hi.grad);
      const double a = hi_ok ? detail::cubic_min(lo.step, lo.value.value, lo.grad.dot(dir), hi.step, hi.value.value,
                                                 hi.grad.dot(dir))
                             : 0.5 * (lo.step + hi.step);
      LineSearchResult r;
      if (!eval(a, r) || !armijo(r) || r.value.value >= lo.value.value) {
        hi = std::move(r);
        continue;
      }
      const double dr = r.grad.dot(dir);
      if (std::abs(dr) <= -opts.c2 * d0) {
        r.ok = true;
        return r;
      }
      if (dr * (hi.step - lo.step) >= 0.0) hi = std::move(lo);
      lo = std::move(r);
    }
    return {};
  };

  LineSearchResult prev;
  prev.step = 0.0;
  prev.value = f0;
  prev.theta = theta;
  prev.grad = g0;
  double a = alpha0;
  for (int i = 0; trials < opts.max_line_search; ++i) {
    LineSearchResult r;
    if (!eval(a, r)) {
      // Inadmissible trial: shrink toward the last admissible point.
      a = prev.step + 0.5 * (a - prev.step);
      continue;
    }
    if (!armijo(r) || (i > 0 && r.value.value >= prev.value.value)) {
      out = zoom(std::move(prev), std::move(r));
      break;
    }
    if (curvature(r)) {
      r.ok = true;
      out = std::move(r);
      break;
    }
    if (r.grad.dot(dir) >= 0.0) {
      out = zoom(std::move(r), std::move(prev));
      break;
    }
    prev = std::move(r);
    a *= 2.0;
  }
  if (out.ok && !(armijo(out) && curvature(out))) throw OptimizationError("line search returned a non-Wolfe step");
  return out;
}

// Dense inverse-Hessian BFGS.
inline BfgsResult bfgs_minimize(const Objective& f, const Eigen::VectorXd& theta0, const OptimizerOptions& opts,
                                const std::function<void(const HistoryRow&)>& on_iteration = {}) {
  opts.validate();
  const Eigen::Index n = theta0.size();
  BfgsResult res;
  res.theta = theta0;
  res.grad.resize(n);
  res.value = f(res.theta, res.grad);
  if (!detail::finite_eval(res.value, res.grad)) throw OptimizationError("bfgs: objective is not finite at the start");

  auto record = [&](int it, double step) {
    HistoryRow row{it, res.value.value, res.value.parts, res.grad.norm(), step};
    res.history.push_back(row);
    if (on_iteration) on_iteration(row);
  };
  record(0, 0.0);

  Eigen::MatrixXd H;
  bool scaled = false;
  auto reset = [&] {
    H = Eigen::MatrixXd::Identity(n, n);
    scaled = false;
  };
  reset();

  for (int it = 1;; ++it) {
    if (res.value.value <= opts.loss_target) {
      res.status = Termination::kLossTarget;
      break;
    }
    if (res.grad.norm() <= opts.grad_tol) {
      res.status = Termination::kGradientTolerance;
      break;
    }
    if (it > opts.max_iterations) {
      res.status = Termination::kMaxIterations;
      break;
    }
    Eigen::VectorXd dir = -(H * res.grad);
    if (!(res.grad.dot(dir) < 0.0)) {
      reset();
      dir = -res.grad;
    }
    const double alpha0 = scaled ? 1.0 : opts.initial_step / std::max(1.0, res.grad.norm());
    LineSearchResult ls = wolfe_line_search(f, res.theta, res.value, res.grad, dir, alpha0, opts);
    if (!ls.ok) {
      res.status = Termination::kLineSearchFailure;
      break;
    }
    const Eigen::VectorXd s = ls.theta - res.theta;
    const Eigen::VectorXd y = ls.grad - res.grad;
    res.theta = std::move(ls.theta);
    res.grad = std::move(ls.grad);
    res.value = ls.value;
    res.iterations = it;

    const double sy = s.dot(y);
    if (sy > 0.0) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd w = H * y;
      const double c = rho * rho * y.dot(w) + rho;
      // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      H.noalias() += s * (c * s - rho * w).transpose();
      H.noalias() -= rho * w * s.transpose();
    }
    record(it, ls.step);
  }
  return res;
}

}  // namespace dqpinn::optim
