#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dqpinn/dqme/basis.hpp"
#include "dqpinn/dqme/convention.hpp"
#include "dqpinn/dqme/liouvillian.hpp"
#include "dqpinn/errors.hpp"
#include "dqpinn/pinn/loss.hpp"
#include "dqpinn/pinn/model.hpp"
#include "dqpinn/reference.hpp"

namespace dqpinn::pinn {

// Spinless level coupled to one discrete bath level at M_max = 1 (12 states).
struct GradcheckOptions {
  double level_energy = 0.4;
  double coupling_re = 0.5;
  double coupling_im = 0.2;
  double kT = 1.0 / 1.2;
  double mu = 0.1;
  double eps = 0.7;
  int hidden = 5;
  int layers = 3;
  int draws = 20;
  int points = 6;
  double t_start = 0.1;
  double t_end = 0.4;
  double dt = 1e-3;
  double fd_step = 1e-6;
  double tolerance = 1e-6;
  std::uint64_t seed = 100;

  void validate() const {
    if (draws < 1 || points < 2 || hidden < 1 || layers < 1 || !(t_end > t_start) || !(kT > 0.0) ||
        !(fd_step > 0.0) || !(dt > 0.0) || !(tolerance > 0.0))
      throw ConfigError("gradcheck options are invalid");
  }
};

struct GradcheckReport {
  std::size_t n_states = 0;
  std::size_t n_parameters = 0;
  std::vector<double> errors;  // ||g - g_fd|| / ||g|| per draw
  double worst = 0.0;
  bool passed = false;
};

// Analytic loss gradient against central finite differences on every real parameter.
inline GradcheckReport gradient_check(const GradcheckOptions& o, int threads = 1) {
  o.validate();
  const dqme::RdtBasis basis = dqme::enumerate_basis(1, 1, 1);
  const auto levels = dqme::pair_levels(
      reference::discrete_level_modes({{o.level_energy, cplx(o.coupling_re, o.coupling_im), 0, 0}}, 1.0 / o.kT, o.mu));
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(2, 2);
  h(1, 1) = o.eps;
  const dqme::Liouvillian L =
      dqme::build_liouvillian(h, levels, basis, dqme::selected_convention().selected, 1, {false, 1e-12});
  const Shape shape{4, 3, o.hidden, o.layers};
  const FeatureMap features = FeatureMap::parse({"t", "t^2", "t^3"});
  std::vector<double> pts;
  for (int i = 0; i < o.points; ++i) pts.push_back(o.t_start + (o.t_end - o.t_start) * i / (o.points - 1));
  LossOptions lo;
  lo.dt = o.dt;

  GradcheckReport rep;
  rep.n_states = basis.size();
  rep.n_parameters = shape.real_parameters();
  for (int d = 0; d < o.draws; ++d) {
    Model m = init_model(shape, features, o.seed + static_cast<std::uint64_t>(d));
    Model prev = init_model(shape, features, o.seed + 1000 + static_cast<std::uint64_t>(d));
    m.t_start = prev.t_start = o.t_start;
    m.t_end = prev.t_end = o.t_end;
    const SubdomainLoss loss(basis, L, pts, rdt_eval(prev, basis, o.t_start).values, o.t_start, o.t_end, lo);
    Eigen::VectorXd g;
    if (!loss.eval_with_gradient(m, g, threads).finite) throw PhysicsError("gradcheck: non-finite loss");
    const Eigen::VectorXd fd = finite_difference_gradient(loss, m, o.fd_step);
    const double e = (g - fd).norm() / std::max(g.norm(), 1e-300);
    rep.errors.push_back(e);
    rep.worst = std::max(rep.worst, e);
  }
  rep.passed = rep.worst <= o.tolerance;
  return rep;
}

}  // namespace dqpinn::pinn
