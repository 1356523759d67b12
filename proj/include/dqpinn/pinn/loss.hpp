#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "dqpinn/dqme/basis.hpp"
#include "dqpinn/dqme/liouvillian.hpp"
#include "dqpinn/errors.hpp"
#include "dqpinn/pinn/model.hpp"

namespace dqpinn::pinn {

struct LossOptions {
  double w_residual = 0.2;
  double w_initial = 0.8;
  double w_trace = 20.0;
  double lambda = -3.0;
  double dt = 1.5e-9;
  double trace_guard = 1e-6;
};

struct LossReport {
  double l_r = 0.0;
  double l_i = 0.0;
  double l_tr = 0.0;
  double total = 0.0;
  std::vector<double> residual_norms;  // ||rho_dot - L rho||_2 / |tr rho_0| per residual point
  bool finite = true;
};

// Loss of one subdomain: residual points, the initial-condition target at the subdomain start, and L.
class SubdomainLoss {
 public:
  SubdomainLoss(const dqme::RdtBasis& basis, const dqme::Liouvillian& L, std::vector<double> points,
                Eigen::VectorXcd initial_target, double t_start, double t_end, LossOptions opts = {})
      : basis_(&basis),
        L_(&L),
        points_(std::move(points)),
        target_(std::move(initial_target)),
        t_start_(t_start),
        t_end_(t_end),
        opts_(opts),
        inputs_(state_inputs(basis)) {
    if (L.dim() != basis.size() || static_cast<std::size_t>(target_.size()) != basis.size())
      throw DimensionError("subdomain loss: basis, generator and target disagree in size");
    if (!(t_end_ > t_start_)) throw ConfigError("subdomain loss: empty interval");
    const double slack = 1e-12 * std::max(1.0, std::abs(t_end_));
    for (double t : points_)
      if (t < t_start_ - slack || t > t_end_ + slack) throw ConfigError("subdomain loss: residual point outside interval");
    weight_ = Eigen::VectorXd(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i)
      weight_(static_cast<Eigen::Index>(i)) = std::exp(opts_.lambda * dqme::tier(basis.layout(), basis.state(i)));
    for (auto i : basis.vacuum_diagonal()) vd_.push_back(static_cast<Eigen::Index>(i));
  }

  const std::vector<double>& points() const { return points_; }
  const LossOptions& options() const { return opts_; }
  const Eigen::VectorXcd& target() const { return target_; }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  double t_start() const { return t_start_; }
  double t_end() const { return t_end_; }

  LossReport eval(const Model& m) const { return run(m, nullptr, 1); }

  // Gradient w.r.t. the real parametrization; deterministic for any thread count.
  LossReport eval_with_gradient(const Model& m, Eigen::VectorXd& grad, int threads = 1) const {
    return run(m, &grad, threads);
  }

 private:
  struct Unit {
    double l_r = 0.0, l_i = 0.0, l_tr = 0.0, norm = 0.0;
    bool finite = true;
    Eigen::VectorXd grad;
  };

  // Unit k < points: residual point k; unit == points: initial-condition term.
  void run_unit(const Model& m, std::size_t k, bool want_grad, Unit& u) const {
    const Eigen::Index n = static_cast<Eigen::Index>(basis_->size());
    const bool initial = k == points_.size();
    const double width = t_end_ - t_start_;
    Stencil st{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, 0, 0.0};
    int nt = 1;
    if (!initial) {
      st = stencil_at(points_[k] - t_start_, width, opts_.dt);
      nt = 3;
    }
    const double tl0 = initial ? 0.0 : points_[k] - t_start_;
    const int K = m.shape.layers;
    const int nb = m.shape.n_bits;
    const int nf = m.shape.n_features;

    // Forward pass on all states for each stencil time, side by side.
    std::vector<Eigen::VectorXd> feats(nt, Eigen::VectorXd(nf));
    const CMat base = m.W[0].leftCols(nb) * inputs_.cast<cplx>();
    CMat z(base.rows(), n * nt);
    for (int q = 0; q < nt; ++q) {
      m.features.eval(tl0 + st.offset[q], feats[q]);
      const CVec shift = m.b[0] + m.W[0].rightCols(nf) * feats[q].cast<cplx>();
      z.middleCols(q * n, n) = base.colwise() + shift;
    }
    std::vector<CMat> h;  // activations of hidden layers 1..K-1
    for (int i = 1; i < K; ++i) {
      h.push_back(activation(z.array()).matrix());
      z = m.W[i] * h.back();
      z.colwise() += m.b[i];
    }
    if (!z.allFinite()) {
      u.finite = false;
      return;
    }
    std::vector<CVec> rho(nt);
    for (int q = 0; q < nt; ++q) rho[q] = symmetrize(*basis_, z.row(0).segment(q * n, n).transpose());

    std::vector<CVec> g_rho(nt, CVec::Zero(n));
    if (initial) {
      const CVec diff = rho[0] - target_;
      u.l_i = (weight_.array() * diff.array().abs2()).sum();
      g_rho[0] = opts_.w_initial * 2.0 * (weight_.cast<cplx>().array() * diff.array()).matrix();
    } else {
      const CVec& rc = rho[st.center];
      double tr = 0.0;
      for (auto i : vd_) tr += rc(i).real();
      if (std::abs(tr) < opts_.trace_guard)
        throw DivisionGuardError("subdomain loss: trace of the reduced density operator below guard");
      CVec r = CVec::Zero(n);
      for (int q = 0; q < 3; ++q)
        if (st.coeff[q] != 0.0) r += st.coeff[q] * rho[q];
      r = st.scale * r - L_->apply(rc);
      const double nr = r.squaredNorm();
      u.l_r = nr / (tr * tr);
      u.l_tr = (tr - 1.0) * (tr - 1.0);
      u.norm = std::sqrt(nr) / std::abs(tr);
      if (want_grad) {
        const CVec gr = (opts_.w_residual * 2.0 / (tr * tr)) * r;
        for (int q = 0; q < 3; ++q)
          if (st.coeff[q] != 0.0) g_rho[q] += (st.scale * st.coeff[q]) * gr;
        CVec back(n);
        L_->apply_adjoint(gr, back);
        g_rho[st.center] -= back;
        const double dtr = -opts_.w_residual * 2.0 * nr / (tr * tr * tr) + opts_.w_trace * 2.0 * (tr - 1.0);
        for (auto i : vd_) g_rho[st.center](i) += dtr;
      }
    }
    if (!want_grad) return;

    // Through the symmetrization: g_pre(s) = g(s) + phase(s) conj(g(s^T)).
    CMat g(1, n * nt);
    for (int q = 0; q < nt; ++q)
      for (std::size_t i = 0; i < basis_->size(); ++i)
        g(0, q * n + static_cast<Eigen::Index>(i)) =
            g_rho[q](static_cast<Eigen::Index>(i)) +
            basis_->phase(i) * std::conj(g_rho[q](static_cast<Eigen::Index>(basis_->partner(i))));

    std::vector<CMat> gW(K);
    std::vector<CVec> gb(K);
    for (int i = K - 1; i >= 1; --i) {
      gW[i] = g * h[i - 1].adjoint();
      gb[i] = g.rowwise().sum();
      CMat gh = m.W[i].adjoint() * g;
      const auto& hh = h[i - 1].array();
      g = (gh.array() * (-hh * (1.0 - hh)).conjugate()).matrix();
    }
    gb[0] = g.rowwise().sum();
    gW[0] = CMat::Zero(m.W[0].rows(), m.W[0].cols());
    CMat gsum = g.middleCols(0, n);
    for (int q = 1; q < nt; ++q) gsum += g.middleCols(q * n, n);
    gW[0].leftCols(nb) = gsum * inputs_.transpose().cast<cplx>();
    for (int q = 0; q < nt; ++q)
      gW[0].rightCols(nf) += g.middleCols(q * n, n).rowwise().sum() * feats[q].transpose().cast<cplx>();
    u.grad = flatten_gradient(m.shape, gW, gb);
  }

  LossReport run(const Model& m, Eigen::VectorXd* grad, int threads) const {
    if (m.shape.n_bits != inputs_.rows()) throw DimensionError("subdomain loss: network input does not match basis");
    const std::size_t units = points_.size() + 1;
    std::vector<Unit> out(units);
    const bool want = grad != nullptr;
    const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(units)));
    if (nthreads == 1) {
      for (std::size_t k = 0; k < units; ++k) run_unit(m, k, want, out[k]);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
      for (int w = 0; w < nthreads; ++w)
        pool.emplace_back([&, w] {
          try {
            for (std::size_t k = static_cast<std::size_t>(w); k < units; k += static_cast<std::size_t>(nthreads))
              run_unit(m, k, want, out[k]);
          } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
          }
        });
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    LossReport rep;
    if (want) *grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.shape.real_parameters()));
    for (std::size_t k = 0; k < units; ++k) {
      if (!out[k].finite) {
        rep.finite = false;
        continue;
      }
      rep.l_r += out[k].l_r;
      rep.l_i += out[k].l_i;
      rep.l_tr += out[k].l_tr;
      if (k < points_.size()) rep.residual_norms.push_back(out[k].norm);
      if (want) *grad += out[k].grad;
    }
    rep.total = opts_.w_residual * rep.l_r + opts_.w_initial * rep.l_i + opts_.w_trace * rep.l_tr;
    if (!rep.finite || !std::isfinite(rep.total)) {
      rep.finite = false;
      rep.total = std::numeric_limits<double>::infinity();
    }
    if (want && !grad->allFinite()) rep.finite = false;
    return rep;
  }

  const dqme::RdtBasis* basis_;
  const dqme::Liouvillian* L_;
  std::vector<double> points_;
  Eigen::VectorXcd target_;
  double t_start_, t_end_;
  LossOptions opts_;
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd weight_;
  std::vector<Eigen::Index> vd_;
};

// Central finite-difference gradient of the loss (oracle for the backpropagated gradient).
inline Eigen::VectorXd finite_difference_gradient(const SubdomainLoss& loss, const Model& m, double step = 1e-6) {
  Model work = m;
  const Eigen::VectorXd theta = flatten(m);
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp(k) += step;
    tm(k) -= step;
    unflatten(tp, work);
    const double fp = loss.eval(work).total;
    unflatten(tm, work);
    const double fm = loss.eval(work).total;
    g(k) = (fp - fm) / (2.0 * step);
  }
  return g;
}

}  // namespace dqpinn::pinn
