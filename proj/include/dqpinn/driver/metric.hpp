#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dqpinn/errors.hpp"
#include "dqpinn/reference.hpp"

namespace dqpinn::driver {

enum class Observable { kNUp, kCurrentL, kCurrentR, kTraceRe };

inline double value_of(const reference::TrajectoryRecord& r, Observable x) {
  switch (x) {
    case Observable::kNUp: return r.n_up;
    case Observable::kCurrentL: return r.current_l;
    case Observable::kCurrentR: return r.current_r;
    case Observable::kTraceRe: return r.trace.real();
  }
  return 0.0;
}

inline Observable parse_observable(const std::string& s) {
  if (s == "n_up") return Observable::kNUp;
  if (s == "I_L") return Observable::kCurrentL;
  if (s == "I_R") return Observable::kCurrentR;
  if (s == "trace_re") return Observable::kTraceRe;
  throw ConfigError("unknown observable '" + s + "'");
}

namespace detail {

// Piecewise-linear interpolation of X on a time-ascending trajectory.
inline double interpolate(const reference::Trajectory& tr, Observable x, double t) {
  const auto& rows = tr.rows;
  auto it = std::lower_bound(rows.begin(), rows.end(), t, [](const auto& r, double v) { return r.t < v; });
  if (it == rows.end()) return value_of(rows.back(), x);
  if (it->t == t || it == rows.begin()) return value_of(*it, x);
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double w = (t - a.t) / (b.t - a.t);
  return (1.0 - w) * value_of(a, x) + w * value_of(b, x);
}

}  // namespace detail

// E_X = int |X - X_ref| dt / int (|X| + |X_ref|) / 2 dt over [t0, t1], trapezoidal on the union of both grids.
inline double relative_error_metric(const reference::Trajectory& a, const reference::Trajectory& b, Observable x,
                                    double t0, double t1) {
  if (a.rows.empty() || b.rows.empty()) throw ConfigError("error metric: empty trajectory");
  if (!(t1 > t0)) throw ConfigError("error metric: empty interval");
  const double slack = 1e-9 * std::max(1.0, std::abs(t1));
  for (const auto* tr : {&a, &b})
    if (tr->rows.front().t > t0 + slack || tr->rows.back().t < t1 - slack)
      throw ConfigError("error metric: trajectory does not cover the interval");
  std::vector<double> grid{t0, t1};
  for (const auto* tr : {&a, &b})
    for (const auto& r : tr->rows)
      if (r.t > t0 && r.t < t1) grid.push_back(r.t);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  double num = 0.0, den = 0.0;
  double pn = 0.0, pd = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double xa = detail::interpolate(a, x, grid[i]);
    const double xb = detail::interpolate(b, x, grid[i]);
    const double n = std::abs(xa - xb), d = 0.5 * (std::abs(xa) + std::abs(xb));
    if (i > 0) {
      const double h = grid[i] - grid[i - 1];
      num += 0.5 * h * (n + pn);
      den += 0.5 * h * (d + pd);
    }
    pn = n;
    pd = d;
  }
  if (!(den > 0.0)) throw DivisionGuardError("error metric: zero denominator");
  return num / den;
}

// max |X - X_ref| over [t0, t1] on the union of both grids.
inline double max_abs_deviation(const reference::Trajectory& a, const reference::Trajectory& b, Observable x, double t0,
                                double t1) {
  if (a.rows.empty() || b.rows.empty()) throw ConfigError("deviation: empty trajectory");
  const double slack = 1e-9 * std::max(1.0, std::abs(t1));
  for (const auto* tr : {&a, &b})
    if (tr->rows.front().t > t0 + slack || tr->rows.back().t < t1 - slack)
      throw ConfigError("deviation: trajectory does not cover the interval");
  double worst = 0.0;
  for (const auto* tr : {&a, &b})
    for (const auto& r : tr->rows)
      if (r.t >= t0 - slack && r.t <= t1 + slack)
        worst = std::max(worst, std::abs(detail::interpolate(a, x, r.t) - detail::interpolate(b, x, r.t)));
  return worst;
}

}  // namespace dqpinn::driver
