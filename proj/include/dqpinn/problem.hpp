#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dqpinn/bath.hpp"
#include "dqpinn/dqme/basis.hpp"
#include "dqpinn/dqme/convention.hpp"
#include "dqpinn/dqme/liouvillian.hpp"
#include "dqpinn/dqme/observables.hpp"
#include "dqpinn/reference.hpp"

namespace dqpinn {

enum class InitialState { kFactorized, kRelaxed };

struct ProblemSpec {
  dqme::SystemSpec system;
  bath::BathSpec bath;
  int m_max = 2;
  bool filter = true;
  InitialState initial = InitialState::kFactorized;
  // Equilibrium of the isolated pre-quench system at (eq_beta, eq_mu).
  double eq_beta = 1.0 / 3.0;
  double eq_mu = 0.0;
  // Relaxed mode: propagate under the pre-quench generator for relax_time first.
  double relax_time = 0.0;
  double relax_dt = 5e-4;
};

// Single impurity quench between two symmetric reservoirs, energies in units of Gamma.
inline ProblemSpec anderson_defaults(double kT) {
  ProblemSpec p;
  p.system = dqme::SystemSpec{};
  bath::Reservoir left, right;
  left.name = "L";
  right.name = "R";
  left.beta = right.beta = 1.0 / kT;
  left.mu = left.band_center = 1.0;
  right.mu = right.band_center = -1.0;
  left.band_width = right.band_width = 5.0;
  left.coupling = right.coupling = {0.5, 0.5};
  p.bath.reservoirs = {left, right};
  p.bath.n_orbitals = 2;
  p.bath.pade_order = 2;
  p.m_max = 2;
  p.eq_beta = 1.0 / kT;
  return p;
}

struct Problem {
  ProblemSpec spec;
  std::vector<bath::ExponentialMode> modes;
  std::vector<dqme::DissipatonLevel> levels;
  dqme::ConventionSearchResult convention;
  std::size_t full_size = 0;
  dqme::RdtBasis basis;
  dqme::Liouvillian L;
  dqme::RdtVector rho0;
};

inline Problem assemble(const ProblemSpec& spec) {
  spec.system.validate();
  if (spec.bath.n_orbitals != spec.system.ns) throw ConfigError("bath and system disagree on the number of spin-orbitals");
  Problem p;
  p.spec = spec;
  p.modes = bath::expand_correlation(spec.bath);
  p.levels = dqme::pair_levels(p.modes);
  p.convention = dqme::selected_convention();
  const int nres = static_cast<int>(spec.bath.reservoirs.size());
  const Eigen::MatrixXcd h_post = spec.system.hamiltonian(true);
  if (spec.filter) {
    auto g = dqme::build_filtered(h_post, p.levels, spec.system.ns, spec.m_max, p.convention.selected, nres);
    p.full_size = g.full.size();
    p.basis = std::move(g.basis);
    p.L = std::move(g.L);
  } else {
    p.basis = dqme::enumerate_basis(spec.system.ns, static_cast<int>(p.levels.size()), spec.m_max);
    p.full_size = p.basis.size();
    p.L = dqme::build_liouvillian(h_post, p.levels, p.basis, p.convention.selected, nres);
  }
  const Eigen::MatrixXcd h_pre = spec.system.hamiltonian(false);
  p.rho0.time = spec.system.t_quench;
  p.rho0.values = dqme::embed_system_state(p.basis, dqme::thermal_system_state(h_pre, spec.eq_beta, spec.eq_mu));
  if (spec.initial == InitialState::kRelaxed && spec.relax_time > 0.0) {
    const dqme::Liouvillian L_pre =
        dqme::build_liouvillian(h_pre, p.levels, p.basis, p.convention.selected, nres);
    reference::PropagateOptions po;
    po.dt = spec.relax_dt;
    po.output_dt = spec.relax_time;
    po.horizon = spec.relax_time;
    po.keep_snapshots = true;
    const auto traj = reference::propagate_reference(L_pre, p.basis, {0.0, p.rho0.values}, po);
    p.rho0.values = traj.snapshots.back().values;
  }
  return p;
}

struct OracleComparison {
  double max_error = 0.0;       // max |n_u(DQME) - n_u(exact)| over the grid and spin-orbitals
  double horizon = 0.0;
  std::size_t basis_size = 0;
  std::vector<double> times;
  std::vector<double> dqme_n0, exact_n0;
};

// Runs DQME with discrete-level modes against the exact full-space oracle on [0, 2 / Gamma_eff].
inline OracleComparison compare_with_discrete_bath(const Eigen::MatrixXcd& h_sys, const Eigen::MatrixXcd& rho_sys,
                                                   const std::vector<reference::DiscreteLevel>& bath_levels,
                                                   double beta, double mu, int m_max, double dt = 1e-3,
                                                   double output_dt = 0.05) {
  const int ns = static_cast<int>(std::lround(std::log2(static_cast<double>(h_sys.rows()))));
  const auto levels = dqme::pair_levels(reference::discrete_level_modes(bath_levels, beta, mu));
  int nres = 1;
  double g2 = 0.0;
  for (const auto& l : bath_levels) {
    nres = std::max(nres, l.reservoir + 1);
    g2 += std::norm(l.coupling);
  }
  OracleComparison out;
  out.horizon = std::ceil(2.0 / std::sqrt(g2) / output_dt) * output_dt;
  const auto g = dqme::build_filtered(h_sys, levels, ns, m_max, dqme::selected_convention().selected, nres);
  out.basis_size = g.basis.size();
  reference::PropagateOptions po;
  po.dt = dt;
  po.output_dt = output_dt;
  po.horizon = out.horizon;
  po.keep_snapshots = true;
  const auto traj = reference::propagate_reference(g.L, g.basis, {0.0, dqme::embed_system_state(g.basis, rho_sys)}, po);
  for (const auto& r : traj.rows) out.times.push_back(r.t);
  const auto exact = reference::discrete_bath_oracle(h_sys, rho_sys, bath_levels, beta, mu, out.times);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    for (int u = 0; u < ns; ++u) {
      const double n = dqme::occupation_expectation(g.basis, traj.snapshots[i].values, u).value;
      out.max_error = std::max(out.max_error, std::abs(n - exact.occupations[i][static_cast<std::size_t>(u)]));
      if (u == 0) {
        out.dqme_n0.push_back(n);
        out.exact_n0.push_back(exact.occupations[i][0]);
      }
    }
  }
  return out;
}

}  // namespace dqpinn
