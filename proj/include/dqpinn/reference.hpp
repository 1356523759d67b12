#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "dqpinn/bath.hpp"
#include "dqpinn/dqme/liouvillian.hpp"
#include "dqpinn/dqme/observables.hpp"
#include "dqpinn/errors.hpp"

namespace dqpinn::reference {

using dqme::RdtVector;

struct TrajectoryRecord {
  double t = 0.0;
  cplx trace{};
  double n_up = 0.0;
  double current_l = 0.0;
  double current_r = 0.0;
  double n_total = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryRecord> rows;
  std::vector<RdtVector> snapshots;  // optional, aligned with rows when kept

  bool empty() const { return rows.empty(); }
  std::size_t size() const { return rows.size(); }
};

inline TrajectoryRecord observe(const dqme::Liouvillian& L, const dqme::RdtBasis& basis, const Eigen::VectorXcd& rho,
                                double t) {
  TrajectoryRecord r;
  r.t = t;
  r.trace = dqme::trace(basis, rho);
  r.n_up = dqme::occupation_expectation(basis, rho, 0).value;
  r.n_total = dqme::total_occupation(basis, rho).value;
  if (L.n_reservoirs() > 0) r.current_l = dqme::reservoir_current(L, basis, rho, 0).value;
  if (L.n_reservoirs() > 1) r.current_r = dqme::reservoir_current(L, basis, rho, 1).value;
  return r;
}

// Classical RK4 for x' = op(x) with reusable stage storage.
class Rk4 {
 public:
  template <class Op>
  void step(const Op& op, Eigen::VectorXcd& x, double dt) {
    if (!(dt > 0.0)) throw StepError("rk4_step: dt must be > 0");
    op(x, k1_);
    tmp_ = x + (0.5 * dt) * k1_;
    op(tmp_, k2_);
    tmp_ = x + (0.5 * dt) * k2_;
    op(tmp_, k3_);
    tmp_ = x + dt * k3_;
    op(tmp_, k4_);
    x += (dt / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
    if (!x.allFinite()) throw StepError("rk4_step: non-finite state");
  }

 private:
  Eigen::VectorXcd k1_, k2_, k3_, k4_, tmp_;
};

inline RdtVector rk4_step(const dqme::Liouvillian& L, const RdtVector& rho, double dt) {
  Rk4 rk;
  RdtVector out = rho;
  rk.step([&](const Eigen::VectorXcd& x, Eigen::VectorXcd& y) { L.apply(x, y); }, out.values, dt);
  out.time += dt;
  return out;
}

struct PropagateOptions {
  double dt = 5e-4;
  double horizon = 2.3;
  double output_dt = 0.01;
  double trace_drift_limit = 1e-6;
  bool keep_snapshots = false;
};

inline int steps_per_output(const PropagateOptions& o) {
  if (!(o.dt > 0.0) || !(o.output_dt > 0.0) || !(o.horizon > 0.0))
    throw ConfigError("propagate: dt, output_dt and horizon must be > 0");
  const double ratio = o.output_dt / o.dt;
  const double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9 * ratio) throw ConfigError("propagate: output_dt must be a multiple of dt");
  return static_cast<int>(r);
}

inline Trajectory propagate_reference(const dqme::Liouvillian& L, const dqme::RdtBasis& basis, const RdtVector& rho0,
                                      const PropagateOptions& opts) {
  if (static_cast<std::size_t>(rho0.values.size()) != basis.size() || L.dim() != basis.size())
    throw DimensionError("propagate_reference: dimension mismatch");
  const int inner = steps_per_output(opts);
  const double out_ratio = opts.horizon / opts.output_dt;
  const long n_out = std::lround(out_ratio);
  if (std::abs(out_ratio - static_cast<double>(n_out)) > 1e-9 * out_ratio)
    throw ConfigError("propagate: horizon must be a multiple of output_dt");
  Trajectory traj;
  Eigen::VectorXcd x = rho0.values;
  const cplx tr0 = dqme::trace(basis, x);
  Rk4 rk;
  auto op = [&](const Eigen::VectorXcd& a, Eigen::VectorXcd& b) { L.apply(a, b); };
  auto record = [&](long k) {
    const double t = rho0.time + static_cast<double>(k) * opts.output_dt;
    traj.rows.push_back(observe(L, basis, x, t));
    if (opts.keep_snapshots) traj.snapshots.push_back({t, x});
    const double drift = std::abs(traj.rows.back().trace - tr0);
    if (drift > opts.trace_drift_limit)
      throw InstabilityError("propagate_reference: trace drift " + std::to_string(drift) + " at t=" + std::to_string(t) +
                             " (dt=" + std::to_string(opts.dt) + ")");
  };
  record(0);
  for (long k = 1; k <= n_out; ++k) {
    for (int i = 0; i < inner; ++i) rk.step(op, x, opts.dt);
    record(k);
  }
  return traj;
}

// Max observable change between dt and dt/2 on the same output grid.
inline double step_size_audit(const dqme::Liouvillian& L, const dqme::RdtBasis& basis, const RdtVector& rho0,
                              PropagateOptions opts) {
  opts.keep_snapshots = false;
  const Trajectory a = propagate_reference(L, basis, rho0, opts);
  opts.dt *= 0.5;
  const Trajectory b = propagate_reference(L, basis, rho0, opts);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.rows[i].n_up - b.rows[i].n_up));
    worst = std::max(worst, std::abs(a.rows[i].current_l - b.rows[i].current_l));
    worst = std::max(worst, std::abs(a.rows[i].current_r - b.rows[i].current_r));
    worst = std::max(worst, std::abs(a.rows[i].trace - b.rows[i].trace));
  }
  return worst;
}

// One discrete bath level coupled to system spin-orbital `orbital` of reservoir `reservoir`.
struct DiscreteLevel {
  double energy = 0.0;
  cplx coupling{};
  int orbital = 0;
  int reservoir = 0;
};

inline double occupation(double beta, double mu, double e) {
  if (std::isinf(beta)) return e < mu ? 1.0 : (e > mu ? 0.0 : 0.5);
  return bath::fermi_exact(beta * (e - mu));
}

// eta^sigma = |t|^2 f^sigma(e), gamma^sigma = -sigma i e; pole index enumerates the levels.
inline std::vector<bath::ExponentialMode> discrete_level_modes(const std::vector<DiscreteLevel>& levels, double beta,
                                                               double mu) {
  std::vector<bath::ExponentialMode> modes;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto& lv = levels[k];
    const double f = occupation(beta, mu, lv.energy);
    for (int sigma : {+1, -1}) {
      bath::ExponentialMode m;
      m.sigma = sigma;
      m.alpha = lv.reservoir;
      m.orbital = lv.orbital;
      m.pole = static_cast<int>(k);
      m.kind = bath::ModeKind::kDiscreteLevel;
      m.eta = std::norm(lv.coupling) * (sigma > 0 ? f : 1.0 - f);
      m.gamma = cplx(0.0, -sigma * lv.energy);
      modes.push_back(m);
    }
  }
  return modes;
}

inline constexpr int kOracleModeCap = 12;

struct OracleResult {
  std::vector<double> times;
  std::vector<std::vector<double>> occupations;  // [time][orbital]
  std::vector<double> trace;
  std::vector<double> n_total;        // system particle number
  std::vector<double> n_everything;   // system + bath particle number
};

// Exact evolution of system (N_S spin-orbitals, Hamiltonian h_sys) + discrete bath from rho_sys x thermal bath.
inline OracleResult discrete_bath_oracle(const Eigen::MatrixXcd& h_sys, const Eigen::MatrixXcd& rho_sys,
                                         const std::vector<DiscreteLevel>& levels, double beta, double mu,
                                         const std::vector<double>& times) {
  const int ns = static_cast<int>(std::lround(std::log2(static_cast<double>(h_sys.rows()))));
  const int modes = ns + static_cast<int>(levels.size());
  if (modes > kOracleModeCap) throw CapacityError("discrete_bath_oracle: too many fermionic modes");
  const int dim = 1 << modes;
  const int sys_dim = 1 << ns;
  // Mode q occupies bit q; system modes first, then bath levels.
  auto annihilator = [&](int q) {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim, dim);
    for (int s = 0; s < dim; ++s) {
      if (!((s >> q) & 1)) continue;
      const int sign = (std::popcount(static_cast<unsigned>(s & ((1 << q) - 1))) & 1) ? -1 : 1;
      a(s ^ (1 << q), s) = sign;
    }
    return a;
  };
  std::vector<Eigen::MatrixXcd> c(modes);
  for (int q = 0; q < modes; ++q) c[q] = annihilator(q);

  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
  for (int s = 0; s < dim; ++s)
    for (int t = 0; t < dim; ++t) {
      if ((s >> ns) != (t >> ns)) continue;
      h(s, t) += h_sys(s & (sys_dim - 1), t & (sys_dim - 1));
    }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const int q = ns + static_cast<int>(k);
    const auto& lv = levels[k];
    if (lv.orbital < 0 || lv.orbital >= ns) throw ConfigError("discrete_bath_oracle: level couples to unknown orbital");
    h += lv.energy * c[q].adjoint() * c[q];
    const Eigen::MatrixXcd hop = lv.coupling * c[lv.orbital].adjoint() * c[q];
    h += hop + hop.adjoint();
  }

  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
  for (int s = 0; s < dim; ++s)
    for (int t = 0; t < dim; ++t) {
      if ((s >> ns) != (t >> ns)) continue;
      double w = 1.0;
      for (std::size_t k = 0; k < levels.size(); ++k) {
        const double f = occupation(beta, mu, levels[k].energy);
        w *= ((s >> (ns + static_cast<int>(k))) & 1) ? f : 1.0 - f;
      }
      rho(s, t) = w * rho_sys(s & (sys_dim - 1), t & (sys_dim - 1));
    }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(h);
  if (eig.info() != Eigen::Success) throw OracleError("discrete_bath_oracle: diagonalization failed");
  const Eigen::MatrixXcd& v = eig.eigenvectors();
  const Eigen::MatrixXcd rho_e = v.adjoint() * rho * v;

  std::vector<Eigen::MatrixXcd> number(modes);
  for (int q = 0; q < modes; ++q) number[q] = c[q].adjoint() * c[q];

  OracleResult out;
  for (double t : times) {
    Eigen::MatrixXcd evolved = rho_e;
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) evolved(a, b) *= std::exp(-kI * (eig.eigenvalues()(a) - eig.eigenvalues()(b)) * t);
    const Eigen::MatrixXcd r = v * evolved * v.adjoint();
    out.times.push_back(t);
    std::vector<double> occ(ns);
    double nsys = 0.0, nall = 0.0;
    for (int q = 0; q < modes; ++q) {
      const double nq = (number[q] * r).trace().real();
      if (q < ns) {
        occ[q] = nq;
        nsys += nq;
      }
      nall += nq;
    }
    out.occupations.push_back(occ);
    out.trace.push_back(r.trace().real());
    out.n_total.push_back(nsys);
    out.n_everything.push_back(nall);
  }
  return out;
}

}  // namespace dqpinn::reference
