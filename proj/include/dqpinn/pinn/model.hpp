#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "dqpinn/bath.hpp"
#include "dqpinn/dqme/basis.hpp"
#include "dqpinn/dqme/observables.hpp"
#include "dqpinn/errors.hpp"
#include "dqpinn/pinn/features.hpp"

namespace dqpinn::pinn {

using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

// K affine maps; K - 1 hidden layers of width `hidden`; scalar output.
struct Shape {
  int n_bits = 0;      // 2 N_S + 2 N_E
  int n_features = 0;  // N_T
  int hidden = 35;
  int layers = 4;      // K

  int input() const { return n_bits + n_features; }
  int width(int i) const { return i == 0 ? input() : (i == layers ? 1 : hidden); }
  bool operator==(const Shape&) const = default;

  void validate() const {
    if (n_bits < 0 || n_features < 1 || hidden < 1 || layers < 1) throw ConfigError("network shape is invalid");
  }
  std::size_t complex_parameters() const {
    std::size_t n = 0;
    for (int i = 1; i <= layers; ++i) n += static_cast<std::size_t>(width(i)) * (width(i - 1) + 1);
    return n;
  }
  std::size_t real_parameters() const { return 2 * complex_parameters(); }
};

struct Model {
  Shape shape;
  std::vector<CMat> W;  // W[i]: width(i+1) x width(i)
  std::vector<CVec> b;
  FeatureMap features;
  double t_start = 0.0;
  double t_end = 0.0;

  bool finite() const {
    for (std::size_t i = 0; i < W.size(); ++i)
      if (!W[i].allFinite() || !b[i].allFinite()) return false;
    return true;
  }
};

// Real parametrization, per layer: [Re W (column-major), Im W, Re b, Im b].
inline Eigen::VectorXd flatten(const Model& m) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(m.shape.real_parameters()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < m.W.size(); ++i) {
    const auto nw = m.W[i].size();
    const auto nb = m.b[i].size();
    out.segment(k, nw) = m.W[i].real().reshaped();
    out.segment(k + nw, nw) = m.W[i].imag().reshaped();
    out.segment(k + 2 * nw, nb) = m.b[i].real();
    out.segment(k + 2 * nw + nb, nb) = m.b[i].imag();
    k += 2 * (nw + nb);
  }
  return out;
}

inline void unflatten(const Eigen::VectorXd& theta, Model& m) {
  if (static_cast<std::size_t>(theta.size()) != m.shape.real_parameters())
    throw DimensionError("parameter vector length does not match the network shape");
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < m.W.size(); ++i) {
    const auto rows = m.W[i].rows(), cols = m.W[i].cols();
    const auto nw = m.W[i].size();
    const auto nb = m.b[i].size();
    m.W[i].real() = theta.segment(k, nw).reshaped(rows, cols);
    m.W[i].imag() = theta.segment(k + nw, nw).reshaped(rows, cols);
    m.b[i].real() = theta.segment(k + 2 * nw, nb);
    m.b[i].imag() = theta.segment(k + 2 * nw + nb, nb);
    k += 2 * (nw + nb);
  }
}

// Complex gradients (dL/dRe + i dL/dIm) packed in the same layout as flatten.
inline Eigen::VectorXd flatten_gradient(const Shape& shape, const std::vector<CMat>& gW, const std::vector<CVec>& gb) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(shape.real_parameters()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < gW.size(); ++i) {
    const auto nw = gW[i].size();
    const auto nb = gb[i].size();
    out.segment(k, nw) = gW[i].real().reshaped();
    out.segment(k + nw, nw) = gW[i].imag().reshaped();
    out.segment(k + 2 * nw, nb) = gb[i].real();
    out.segment(k + 2 * nw + nb, nb) = gb[i].imag();
    k += 2 * (nw + nb);
  }
  return out;
}

// Weights: real and imaginary parts drawn independently from N(0, variance), variance = 1/(N_in + N_out) unless
// overridden; biases zero.
inline Model init_model(const Shape& shape, const FeatureMap& features, std::uint64_t seed,
                        std::optional<double> variance = std::nullopt) {
  shape.validate();
  if (features.size() != static_cast<std::size_t>(shape.n_features))
    throw ConfigError("feature map size does not match the network input");
  Model m;
  m.shape = shape;
  m.features = features;
  std::mt19937_64 rng(seed);
  for (int i = 1; i <= shape.layers; ++i) {
    const int nin = shape.width(i - 1), nout = shape.width(i);
    const double var = variance.value_or(1.0 / (nin + nout));
    CMat w = CMat::Zero(nout, nin);
    if (var > 0.0) {
      std::normal_distribution<double> d(0.0, std::sqrt(var));
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
          const double re = d(rng);
          const double im = d(rng);
          w(r, c) = cplx(re, im);
        }
    }
    m.W.push_back(std::move(w));
    m.b.push_back(CVec::Zero(nout));
  }
  return m;
}

// a(z) = 1 / (e^z + 1), elementwise.
template <class Derived>
inline auto activation(const Eigen::ArrayBase<Derived>& z) {
  return (z.exp() + 1.0).inverse();
}

inline cplx activation(cplx z) { return 1.0 / (std::exp(z) + 1.0); }

// Occupation bits of every basis state as network inputs (0 or 1), one column per state.
inline Eigen::MatrixXd state_inputs(const dqme::RdtBasis& basis) {
  const auto& l = basis.layout();
  const int nb = 2 * l.ns + 2 * l.ne;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(nb, static_cast<Eigen::Index>(basis.size()));
  // Input order: n, n', m-, m+ (matches the global mode order).
  std::vector<int> pos;
  for (int u = 0; u < l.ns; ++u) pos.push_back(l.n_pos(u));
  for (int u = 0; u < l.ns; ++u) pos.push_back(l.np_pos(u));
  for (int j = 0; j < l.ne; ++j) pos.push_back(l.m_pos(-1, j));
  for (int j = 0; j < l.ne; ++j) pos.push_back(l.m_pos(+1, j));
  for (std::size_t c = 0; c < basis.size(); ++c)
    for (int k = 0; k < nb; ++k) s(k, static_cast<Eigen::Index>(c)) = dqme::bit(basis.state(c), pos[k]) ? 1.0 : 0.0;
  return s;
}

// Raw network outputs rho_pre for all states at local time tl.
inline CVec forward_all(const Model& m, const Eigen::MatrixXd& inputs, double tl) {
  Eigen::VectorXd f(m.shape.n_features);
  m.features.eval(tl, f);
  const int nb = m.shape.n_bits;
  CVec shift = m.b[0] + m.W[0].rightCols(m.shape.n_features) * f.cast<cplx>();
  CMat z = m.W[0].leftCols(nb) * inputs.cast<cplx>();
  z.colwise() += shift;
  for (std::size_t i = 1; i < m.W.size(); ++i) {
    CMat h = activation(z.array()).matrix();
    z = m.W[i] * h;
    z.colwise() += m.b[i];
  }
  return z.row(0).transpose();
}

// Single-state forward pass: F_K a(... a(F_1(s_t))).
inline cplx forward_amplitude(const Model& m, const Eigen::VectorXd& bits, double t) {
  if (bits.size() != m.shape.n_bits) throw DimensionError("forward_amplitude: bit vector has wrong length");
  Eigen::VectorXd in(m.shape.input());
  in.head(m.shape.n_bits) = bits;
  Eigen::VectorXd f(m.shape.n_features);
  m.features.eval(t - m.t_start, f);
  in.tail(m.shape.n_features) = f;
  CVec z = m.W[0] * in.cast<cplx>() + m.b[0];
  for (std::size_t i = 1; i < m.W.size(); ++i) z = m.W[i] * activation(z.array()).matrix() + m.b[i];
  return z(0);
}

// rho(s) = rho_pre(s) + phase(s) conj(rho_pre(s^T)) over the filtered basis.
inline CVec symmetrize(const dqme::RdtBasis& basis, const CVec& raw) {
  CVec out(raw.size());
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out(ii) = raw(ii) + basis.phase(i) * std::conj(raw(static_cast<Eigen::Index>(basis.partner(i))));
  }
  return out;
}

inline dqme::RdtVector rdt_eval(const Model& m, const dqme::RdtBasis& basis, const Eigen::MatrixXd& inputs, double t) {
  CVec rho = symmetrize(basis, forward_all(m, inputs, t - m.t_start));
  if (!rho.allFinite()) throw StepError("rdt_eval: non-finite network output");
  return {t, std::move(rho)};
}

inline dqme::RdtVector rdt_eval(const Model& m, const dqme::RdtBasis& basis, double t) {
  return rdt_eval(m, basis, state_inputs(basis), t);
}

// Three-point derivative stencil at local time tl: central inside, second-order one-sided at the ends.
// Derivative = scale * sum_q coeff[q] f(tl + offset[q]); integer weights keep constant outputs exactly stationary.
struct Stencil {
  std::array<double, 3> offset;
  std::array<double, 3> coeff;
  int center;
  double scale;
};

inline Stencil stencil_at(double tl, double width, double dt) {
  const double h = 1.0 / (2.0 * dt);
  if (tl - dt < 0.0) return {{0.0, dt, 2.0 * dt}, {-3.0, 4.0, -1.0}, 0, h};
  if (width > 0.0 && tl + dt > width) return {{0.0, -dt, -2.0 * dt}, {3.0, -4.0, 1.0}, 0, h};
  return {{-dt, 0.0, dt}, {-1.0, 0.0, 1.0}, 1, h};
}

inline dqme::RdtVector rdt_time_derivative(const Model& m, const dqme::RdtBasis& basis, const Eigen::MatrixXd& inputs,
                                           double t, double dt) {
  const double tl = t - m.t_start;
  const Stencil st = stencil_at(tl, m.t_end - m.t_start, dt);
  CVec d = CVec::Zero(static_cast<Eigen::Index>(basis.size()));
  for (int q = 0; q < 3; ++q)
    if (st.coeff[q] != 0.0) d += st.coeff[q] * symmetrize(basis, forward_all(m, inputs, tl + st.offset[q]));
  d *= st.scale;
  if (!d.allFinite()) throw StepError("rdt_time_derivative: non-finite network output");
  return {t, std::move(d)};
}

}  // namespace dqpinn::pinn
