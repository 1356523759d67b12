#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include "dqpinn/errors.hpp"

namespace dqpinn {

using cplx = std::complex<double>;
inline constexpr cplx kI{0.0, 1.0};

}  // namespace dqpinn

namespace dqpinn::bath {

// Poles xi_p (ascending) and residues eta_p of a pole expansion of the Fermi function.
struct PsdTerms {
  std::vector<double> xi;
  std::vector<double> eta;
  std::size_t size() const { return xi.size(); }
};

enum class PoleScheme { kPade, kMatsubara };

// kLiteral: C = int dw e^{sigma i w t} f J. kInversePi: same with a 1/pi prefactor.
enum class Prefactor { kLiteral, kInversePi };

enum class ModeKind { kLorentzianPole, kPadePole, kDiscreteLevel };

inline const char* to_string(ModeKind k) {
  switch (k) {
    case ModeKind::kLorentzianPole: return "lorentzian-pole";
    case ModeKind::kPadePole: return "pade-pole";
    case ModeKind::kDiscreteLevel: return "discrete-level";
  }
  return "unknown";
}

struct Reservoir {
  std::string name;
  double beta = 1.0;
  double mu = 0.0;
  double band_center = 0.0;
  double band_width = 1.0;
  // Gamma per system spin-orbital u.
  std::vector<double> coupling;
};

struct BathSpec {
  std::vector<Reservoir> reservoirs;
  int n_orbitals = 1;
  int pade_order = 2;
  PoleScheme scheme = PoleScheme::kPade;
  Prefactor prefactor = Prefactor::kLiteral;

  void validate() const {
    if (n_orbitals < 1) throw ConfigError("bath: need at least one system spin-orbital");
    if (pade_order < 1) throw ConfigError("bath: pade_order must be >= 1");
    if (reservoirs.empty()) throw ConfigError("bath: no reservoirs");
    for (const auto& r : reservoirs) {
      if (!(r.beta > 0.0)) throw ConfigError("bath: beta must be > 0 for reservoir " + r.name);
      if (!(r.band_width > 0.0)) throw ConfigError("bath: band width must be > 0 for reservoir " + r.name);
      if (static_cast<int>(r.coupling.size()) != n_orbitals)
        throw ConfigError("bath: reservoir " + r.name + " needs one coupling per spin-orbital");
      for (double g : r.coupling)
        if (!(g >= 0.0)) throw ConfigError("bath: couplings must be >= 0");
    }
  }
};

// One exponential term eta e^{-gamma t} of C^sigma for reservoir alpha and spin-orbital u.
// pole = 0 is the Lorentzian pole, 1..N the Fermi-function poles (or the level index for discrete baths).
struct ExponentialMode {
  int sigma = +1;
  int alpha = 0;
  int orbital = 0;
  int pole = 0;
  cplx eta{};
  cplx gamma{};
  ModeKind kind = ModeKind::kLorentzianPole;
};

inline double prefactor_value(Prefactor p) {
  return p == Prefactor::kLiteral ? 1.0 : 1.0 / std::numbers::pi;
}

namespace detail {

inline std::vector<double> positive_tridiagonal_eigenvalues(int dim, int shift, int count) {
  // Symmetric tridiagonal with zero diagonal and off-diagonals 1/sqrt((2m+shift)(2m+shift+2)), m = 1..dim-1.
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd off(std::max(dim - 1, 0));
  for (int m = 1; m < dim; ++m) {
    const double a = 2.0 * m + shift;
    off(m - 1) = 1.0 / std::sqrt(a * (a + 2.0));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw DecompositionError("PSD eigenvalue solve failed");
  // Spectrum is symmetric about zero; keep the largest count eigenvalues.
  std::vector<double> out;
  for (int i = dim - count; i < dim; ++i) {
    if (!(solver.eigenvalues()(i) > 0.0)) throw DecompositionError("PSD: expected a positive eigenvalue");
    out.push_back(solver.eigenvalues()(i));
  }
  return out;
}

}  // namespace detail

// [N-1/N] Pade spectral decomposition of 1/(1+e^x).
inline PsdTerms pade_poles_residues(int n) {
  if (n < 1) throw DecompositionError("PSD order must be >= 1");
  auto lam = detail::positive_tridiagonal_eigenvalues(2 * n, -1, n);
  if (static_cast<int>(lam.size()) != n) throw DecompositionError("PSD: unexpected pole count");
  std::vector<double> zeta;
  if (n > 1) {
    auto mu = detail::positive_tridiagonal_eigenvalues(2 * n - 1, 1, n - 1);
    if (static_cast<int>(mu.size()) != n - 1) throw DecompositionError("PSD: unexpected zero count");
    for (double m : mu) zeta.push_back(2.0 / m);
  }
  PsdTerms t;
  for (double l : lam) t.xi.push_back(2.0 / l);
  std::sort(t.xi.begin(), t.xi.end());
  for (int p = 0; p < n; ++p) {
    const double xp2 = t.xi[p] * t.xi[p];
    double num = 0.5 * n * (2.0 * n + 1.0);
    for (double z : zeta) num *= (z * z - xp2);
    double den = 1.0;
    for (int k = 0; k < n; ++k)
      if (k != p) den *= (t.xi[k] * t.xi[k] - xp2);
    t.eta.push_back(num / den);
  }
  for (int p = 0; p < n; ++p) {
    if (!(t.xi[p] > 0.0) || !(t.eta[p] > 0.0) || !std::isfinite(t.eta[p]))
      throw DecompositionError("PSD produced a non-positive pole or residue");
    if (p > 0 && !(t.xi[p] > t.xi[p - 1])) throw DecompositionError("PSD poles not distinct");
  }
  return t;
}

inline PsdTerms matsubara_terms(int n) {
  if (n < 1) throw DecompositionError("Matsubara order must be >= 1");
  PsdTerms t;
  for (int p = 1; p <= n; ++p) {
    t.xi.push_back((2.0 * p - 1.0) * std::numbers::pi);
    t.eta.push_back(1.0);
  }
  return t;
}

inline PsdTerms pole_terms(PoleScheme scheme, int n) {
  return scheme == PoleScheme::kPade ? pade_poles_residues(n) : matsubara_terms(n);
}

inline constexpr double kPoleCollisionTol = 1e-10;

inline cplx fermi_eval_psd(const PsdTerms& terms, cplx z) {
  cplx sum = 0.5;
  for (std::size_t p = 0; p < terms.size(); ++p) {
    const cplx pole{0.0, terms.xi[p]};
    if (std::abs(z - pole) < kPoleCollisionTol || std::abs(z + pole) < kPoleCollisionTol)
      throw SingularArgumentError("fermi_eval_psd: argument hits a pole at +-i*" + std::to_string(terms.xi[p]));
    sum -= 2.0 * terms.eta[p] * z / (z * z + terms.xi[p] * terms.xi[p]);
  }
  return sum;
}

inline double fermi_exact(double x) {
  if (x > 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

// Lorentzian hybridization J(w) = Gamma W^2 / ((w - Omega)^2 + W^2), valid at complex w.
inline cplx lorentzian(const Reservoir& r, double gamma, cplx w) {
  const cplx d = w - r.band_center;
  return gamma * r.band_width * r.band_width / (d * d + r.band_width * r.band_width);
}

inline constexpr double kDegeneracyTol = 1e-8;

inline std::vector<ExponentialMode> expand_correlation(const BathSpec& spec) {
  spec.validate();
  const PsdTerms terms = pole_terms(spec.scheme, spec.pade_order);
  const double pref = prefactor_value(spec.prefactor);
  std::vector<ExponentialMode> modes;
  for (int a = 0; a < static_cast<int>(spec.reservoirs.size()); ++a) {
    const Reservoir& r = spec.reservoirs[a];
    for (int u = 0; u < spec.n_orbitals; ++u) {
      const double g = r.coupling[u];
      for (int sigma : {+1, -1}) {
        const std::size_t first = modes.size();
        const double s = sigma;
        ExponentialMode lor;
        lor.sigma = sigma;
        lor.alpha = a;
        lor.orbital = u;
        lor.pole = 0;
        lor.kind = ModeKind::kLorentzianPole;
        lor.gamma = cplx(r.band_width, -s * r.band_center);
        const cplx zl = s * r.beta * (cplx(r.band_center, s * r.band_width) - r.mu);
        lor.eta = pref * std::numbers::pi * g * r.band_width * fermi_eval_psd(terms, zl);
        modes.push_back(lor);
        for (std::size_t p = 0; p < terms.size(); ++p) {
          ExponentialMode m;
          m.sigma = sigma;
          m.alpha = a;
          m.orbital = u;
          m.pole = static_cast<int>(p) + 1;
          m.kind = ModeKind::kPadePole;
          m.gamma = cplx(terms.xi[p] / r.beta, -s * r.mu);
          const cplx wp = cplx(r.mu, s * terms.xi[p] / r.beta);
          m.eta = pref * (-2.0 * std::numbers::pi * kI / r.beta) * terms.eta[p] * lorentzian(r, g, wp);
          modes.push_back(m);
        }
        for (std::size_t i = first; i < modes.size(); ++i)
          for (std::size_t j = i + 1; j < modes.size(); ++j) {
            const double scale = std::max({1.0, std::abs(modes[i].gamma), std::abs(modes[j].gamma)});
            if (std::abs(modes[i].gamma - modes[j].gamma) < kDegeneracyTol * scale)
              throw DegeneracyError("expand_correlation: degenerate exponents in reservoir " + r.name +
                                    " (band width coincides with a Fermi pole)");
          }
      }
    }
  }
  return modes;
}

// Sum of eta e^{-gamma t} over modes of charge sigma; alpha/orbital < 0 means all.
inline cplx correlation_from_modes(const std::vector<ExponentialMode>& modes, int sigma, double t,
                                   int alpha = -1, int orbital = -1) {
  cplx c = 0.0;
  for (const auto& m : modes) {
    if (m.sigma != sigma) continue;
    if (alpha >= 0 && m.alpha != alpha) continue;
    if (orbital >= 0 && m.orbital != orbital) continue;
    c += m.eta * std::exp(-m.gamma * t);
  }
  return c;
}

struct QuadratureOptions {
  double tolerance = 1e-9;
};

// Numerical C^sigma(t) for one (alpha, u) over the whole real frequency axis,
// with the same PSD Fermi function as the mode expansion.
inline cplx correlation_quadrature_oracle(const BathSpec& spec, int sigma, double t, int alpha, int orbital,
                                          const QuadratureOptions& opts = {}) {
  spec.validate();
  if (t < 0.0) throw OracleError("correlation_quadrature_oracle: t must be >= 0");
  const Reservoir& r = spec.reservoirs.at(alpha);
  const double g = r.coupling.at(orbital);
  if (g == 0.0) return 0.0;
  const PsdTerms terms = pole_terms(spec.scheme, spec.pade_order);
  const double pref = prefactor_value(spec.prefactor);
  const double s = sigma;
  auto f = [&](double w) { return std::real(fermi_eval_psd(terms, cplx(s * r.beta * (w - r.mu), 0.0))); };
  auto integrand = [&](double w) { return pref * f(w) * std::real(lorentzian(r, g, cplx(w, 0.0))); };
  const double scale = std::numbers::pi * g * r.band_width * pref;

  if (t < 1e-14) {
    // w = Omega + W tan(theta) turns J dw into Gamma W dtheta.
    auto h = [&](double theta) { return pref * g * r.band_width * f(r.band_center + r.band_width * std::tan(theta)); };
    double err = 0.0;
    const double half = 0.5 * std::numbers::pi;
    const double val = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(h, -half, half, 15,
                                                                                     opts.tolerance * 1e-3, &err);
    if (!std::isfinite(val) || err > opts.tolerance * std::max(1.0, scale))
      throw OracleError("correlation_quadrature_oracle: t=0 quadrature did not converge");
    return val;
  }

  auto even = [&](double x) { return integrand(r.band_center + x) + integrand(r.band_center - x); };
  auto odd = [&](double x) { return integrand(r.band_center + x) - integrand(r.band_center - x); };
  boost::math::quadrature::ooura_fourier_cos<double> cos_int(opts.tolerance * 1e-3);
  boost::math::quadrature::ooura_fourier_sin<double> sin_int(opts.tolerance * 1e-3);
  const auto [c_val, c_err] = cos_int.integrate(even, t);
  const auto [s_val, s_err] = sin_int.integrate(odd, t);
  if (!std::isfinite(c_val) || !std::isfinite(s_val))
    throw OracleError("correlation_quadrature_oracle: non-finite quadrature");
  const double abs_err = c_err * std::abs(c_val) + s_err * std::abs(s_val);
  if (abs_err > opts.tolerance * std::max(1.0, scale))
    throw OracleError("correlation_quadrature_oracle: Fourier quadrature did not converge");
  return std::exp(s * kI * r.band_center * t) * cplx(c_val, s * s_val);
}

inline cplx correlation_quadrature_oracle(const BathSpec& spec, int sigma, double t) {
  cplx c = 0.0;
  for (int a = 0; a < static_cast<int>(spec.reservoirs.size()); ++a)
    for (int u = 0; u < spec.n_orbitals; ++u) c += correlation_quadrature_oracle(spec, sigma, t, a, u);
  return c;
}

}  // namespace dqpinn::bath
