#pragma once

#include <bit>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "dqpinn/dqme/basis.hpp"
#include "dqpinn/dqme/liouvillian.hpp"

namespace dqpinn::dqme {

struct RdtVector {
  double time = 0.0;
  Eigen::VectorXcd values;
};

inline RdtVector apply_liouvillian(const Liouvillian& L, const RdtVector& rho) {
  RdtVector out;
  out.time = rho.time;
  out.values = L.apply(rho.values);
  return out;
}

struct RealObservable {
  double value = 0.0;
  double imaginary = 0.0;
  bool flagged = false;  // |imaginary residue| > 1e-8
};

inline constexpr double kImaginaryFlag = 1e-8;

inline RealObservable make_real(cplx v) {
  return {v.real(), v.imag(), std::abs(v.imag()) > kImaginaryFlag};
}

// tr_s rho_0
inline cplx trace(const RdtBasis& basis, const Eigen::VectorXcd& rho) {
  cplx t = 0.0;
  for (std::size_t i = 0; i < basis.size(); ++i)
    if (is_vacuum_diagonal(basis.layout(), basis.state(i))) t += rho(static_cast<Eigen::Index>(i));
  return t;
}

inline RealObservable occupation_expectation(const RdtBasis& basis, const Eigen::VectorXcd& rho, int u) {
  if (u < 0 || u >= basis.ns()) throw ConfigError("occupation_expectation: unknown spin-orbital");
  cplx t = 0.0;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const auto s = basis.state(i);
    if (is_vacuum_diagonal(basis.layout(), s) && bit(s, basis.layout().n_pos(u))) t += rho(static_cast<Eigen::Index>(i));
  }
  return make_real(t);
}

inline RealObservable total_occupation(const RdtBasis& basis, const Eigen::VectorXcd& rho) {
  cplx t = 0.0;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const auto s = basis.state(i);
    if (is_vacuum_diagonal(basis.layout(), s))
      t += static_cast<double>(std::popcount(n_bits(basis.layout(), s))) * rho(static_cast<Eigen::Index>(i));
  }
  return make_real(t);
}

// I_alpha = tr_s[N_sys P_0 (L_alpha rho)]; positive for electrons flowing from alpha into the impurity.
inline RealObservable reservoir_current(const Liouvillian& L, const RdtBasis& basis, const Eigen::VectorXcd& rho,
                                        int alpha) {
  if (alpha < 0 || alpha >= L.n_reservoirs()) throw ConfigError("reservoir_current: unknown reservoir tag");
  cplx t = 0.0;
  for (const auto& e : L.entries()) {
    if (e.alpha != alpha) continue;
    const auto s = basis.state(e.row);
    if (!is_vacuum_diagonal(basis.layout(), s)) continue;
    t += static_cast<double>(std::popcount(n_bits(basis.layout(), s))) * e.value * rho(static_cast<Eigen::Index>(e.col));
  }
  return make_real(t);
}

// rho^dagger(s) = phase(s) conj(rho(s^T))
inline Eigen::VectorXcd conjugate_image(const RdtBasis& basis, const Eigen::VectorXcd& rho) {
  Eigen::VectorXcd out(rho.size());
  for (std::size_t i = 0; i < basis.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = basis.phase(i) * std::conj(rho(static_cast<Eigen::Index>(basis.partner(i))));
  return out;
}

inline double hermiticity_residual(const RdtBasis& basis, const Eigen::VectorXcd& rho) {
  return (rho - conjugate_image(basis, rho)).cwiseAbs().maxCoeff();
}

// System density operator rho_s tensored with the dissipaton vacuum.
inline Eigen::VectorXcd embed_system_state(const RdtBasis& basis, const Eigen::MatrixXcd& rho_s) {
  const Layout& l = basis.layout();
  if (rho_s.rows() != (1 << l.ns) || rho_s.cols() != (1 << l.ns))
    throw DimensionError("embed_system_state: wrong system dimension");
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis.size()));
  for (int n = 0; n < (1 << l.ns); ++n)
    for (int np = 0; np < (1 << l.ns); ++np) {
      if (rho_s(n, np) == cplx(0.0)) continue;
      const std::uint64_t s = static_cast<std::uint64_t>(n) | (static_cast<std::uint64_t>(np) << l.ns);
      const auto i = basis.find(s);
      if (!i) throw ClosureError("embed_system_state: system coherence outside the filtered space");
      v(static_cast<Eigen::Index>(*i)) = rho_s(n, np);
    }
  return v;
}

// Grand-canonical equilibrium of a system Hamiltonian diagonal in occupations.
inline Eigen::MatrixXcd thermal_system_state(const Eigen::MatrixXcd& h, double beta, double mu) {
  const int dim = static_cast<int>(h.rows());
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
  std::vector<double> e(dim);
  double lo = 0.0;
  for (int n = 0; n < dim; ++n) {
    if (std::abs(h(n, n).imag()) > 0.0) throw ConfigError("thermal_system_state: Hamiltonian not real diagonal");
    e[n] = h(n, n).real() - mu * std::popcount(static_cast<unsigned>(n));
    lo = n == 0 ? e[n] : std::min(lo, e[n]);
  }
  double z = 0.0;
  for (int n = 0; n < dim; ++n) z += std::exp(-beta * (e[n] - lo));
  for (int n = 0; n < dim; ++n) rho(n, n) = std::exp(-beta * (e[n] - lo)) / z;
  return rho;
}

}  // namespace dqpinn::dqme
