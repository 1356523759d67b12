#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dqpinn/errors.hpp"
#include "dqpinn/optim/bfgs.hpp"
#include "dqpinn/pinn/features.hpp"
#include "dqpinn/pinn/loss.hpp"

namespace dqpinn::driver {

// One optimization stage: mean residual-point spacing, loss target, iteration budget, cusp-localized extras.
struct StagePlan {
  double spacing = 0.015;
  double target = 1e-4;
  int max_iterations = 2000;
  int cusp_extras = 0;
};

struct SubdomainPlan {
  double t_start = 0.0;
  double t_end = 0.0;
  pinn::FeatureMap features;
  std::vector<StagePlan> stages;
};

struct TrainingSchedule {
  std::vector<SubdomainPlan> subdomains;
  pinn::LossOptions loss;
  optim::OptimizerOptions optimizer;

  void validate() const {
    if (subdomains.empty()) throw ConfigError("schedule: no subdomains");
    optimizer.validate();
    for (std::size_t p = 0; p < subdomains.size(); ++p) {
      const auto& s = subdomains[p];
      if (!(s.t_end > s.t_start)) throw ConfigError("schedule: subdomain boundaries are not increasing");
      if (p > 0 && s.t_start != subdomains[p - 1].t_end) throw ConfigError("schedule: subdomains are not contiguous");
      if (s.stages.empty()) throw ConfigError("schedule: subdomain without stages");
      s.features.validate();
      for (std::size_t k = 0; k < s.stages.size(); ++k) {
        const auto& st = s.stages[k];
        if (!(st.spacing > 0.0) || st.max_iterations < 0 || st.cusp_extras < 0)
          throw ConfigError("schedule: invalid stage parameters");
        if (k > 0 && !(st.target <= s.stages[k - 1].target)) throw ConfigError("schedule: stage targets must decrease");
        if (k > 0 && !(st.spacing <= s.stages[k - 1].spacing))
          throw ConfigError("schedule: stage spacings must not grow");
      }
    }
    if (!(loss.dt > 0.0)) throw ConfigError("schedule: derivative step must be positive");
  }
};

// Boundaries t_0 = 0 < t_1 < ... covering the horizon with subdomains of (at most) the given width.
inline std::vector<double> plan_subdomains(double horizon, double width) {
  if (!(horizon > 0.0) || !(width > 0.0)) throw ConfigError("plan_subdomains: horizon and width must be positive");
  const int n = std::max(1, static_cast<int>(std::ceil(horizon / width - 1e-9)));
  std::vector<double> b(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) b[static_cast<std::size_t>(i)] = i == n ? horizon : std::min(horizon, i * width);
  return b;
}

inline void validate_boundaries(const std::vector<double>& b) {
  if (b.size() < 2) throw ConfigError("subdomain boundaries need at least two entries");
  for (std::size_t i = 1; i < b.size(); ++i)
    if (!(b[i] > b[i - 1])) throw ConfigError("subdomain boundaries are not strictly increasing");
}

// Number of intervals whose mean spacing does not exceed `spacing`.
inline int intervals_for(double a, double b, double spacing) {
  return std::max(1, static_cast<int>(std::ceil((b - a) / spacing - 1e-9)));
}

inline std::vector<double> uniform_points(double a, double b, double spacing) {
  const int n = intervals_for(a, b, spacing);
  std::vector<double> pts(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) pts[static_cast<std::size_t>(i)] = i == n ? b : a + (b - a) * i / n;
  return pts;
}

namespace detail {

inline bool insert_unique(std::vector<double>& pts, double t, double tol) {
  auto it = std::lower_bound(pts.begin(), pts.end(), t);
  if (it != pts.end() && std::abs(*it - t) <= tol) return false;
  if (it != pts.begin() && std::abs(*(it - 1) - t) <= tol) return false;
  pts.insert(it, t);
  return true;
}

}  // namespace detail

// Superset refinement: cusp extras near t_cusp first, then midpoints of the widest gaps until the mean spacing
// reaches `spacing`.
inline std::vector<double> refine_points(std::vector<double> pts, double a, double b, double spacing, int cusp_extras,
                                         double t_cusp) {
  std::sort(pts.begin(), pts.end());
  const double tol = 1e-12 * std::max(1.0, std::abs(b));
  if (cusp_extras > 0) {
    const double h = 0.25 * spacing;
    int added = 0;
    for (int k = 0; added < cusp_extras && k < 8 * cusp_extras + 8; ++k) {
      const int j = (k + 1) / 2 * (k % 2 == 1 ? 1 : -1);  // 0, +1, -1, +2, -2, ...
      const double t = t_cusp + j * h;
      if (t < a || t > b) continue;
      if (detail::insert_unique(pts, t, tol)) ++added;
    }
  }
  const auto need = static_cast<std::size_t>(intervals_for(a, b, spacing)) + 1;
  while (pts.size() < need) {
    std::size_t widest = 1;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (pts[i] - pts[i - 1] > pts[widest] - pts[widest - 1]) widest = i;
    pts.insert(pts.begin() + static_cast<std::ptrdiff_t>(widest), 0.5 * (pts[widest] + pts[widest - 1]));
  }
  return pts;
}

inline double mean_spacing(const std::vector<double>& pts) {
  if (pts.size() < 2) return 0.0;
  return (pts.back() - pts.front()) / static_cast<double>(pts.size() - 1);
}

}  // namespace dqpinn::driver
