#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqpinn/bath.hpp"
#include "dqpinn/driver/metric.hpp"
#include "dqpinn/driver/train.hpp"
#include "dqpinn/errors.hpp"
#include "dqpinn/io/checkpoint.hpp"
#include "dqpinn/io/config.hpp"
#include "dqpinn/io/files.hpp"
#include "dqpinn/pinn/gradcheck.hpp"
#include "dqpinn/problem.hpp"

namespace dqpinn::io {

namespace fs = std::filesystem;

struct RunOptions {
  fs::path out = "out";
  int threads = 1;
  bool override_failure = false;
  bool keep_stage_models = false;
  std::ostream* log = nullptr;  // progress lines, may be null
};

inline json convention_json(const dqme::ConventionSearchResult& c) {
  return {{"selected", c.selected.describe()},
          {"candidate_space", c.candidate_space},
          {"conjugation_survivors", c.conjugation_survivors},
          {"trace_survivors", c.trace_survivors},
          {"oracle_survivors", c.oracle_survivors},
          {"physical_classes", c.physical_classes},
          {"conjugation", {{"residual", c.conjugation_residual}, {"pass", c.conjugation_pass}}},
          {"trace", {{"nullity", c.trace_nullity}, {"pass", c.trace_pass}}},
          {"oracle", {{"error", c.oracle_error}, {"pass", c.oracle_pass}}}};
}

inline json basis_json(const Problem& p) {
  const auto inv = dqme::check_invariants(p.L, p.basis);
  return {{"m_max", p.spec.m_max},
          {"n_levels", p.basis.layout().ne},
          {"full_size", p.full_size},
          {"size", p.basis.size()},
          {"hash", hex64(p.basis.hash())},
          {"nonzeros", p.L.nonzeros()},
          {"trace_row_nullity", inv.trace_nullity},
          {"conjugation_residual", inv.conjugation}};
}

inline json manifest_head(const std::string& sub, const RunConfig& c, const RunOptions& o) {
  return {{"tool", "dissipaton-pinn"},
          {"subcommand", sub},
          {"config", config_to_json(c)},
          {"seeds", {{"network", c.network.seed}, {"gradcheck", c.gradcheck.seed}}},
          {"threads", o.threads},
          {"override_subdomain_failure", o.override_failure}};
}

inline void write_manifest(const json& m, const RunOptions& o) { write_atomic(o.out / "manifest.json", m.dump(2) + "\n"); }

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Mode table and C(t) from the modes next to the quadrature oracle, summed over reservoirs and orbitals.
inline json run_bath(const RunConfig& c, const RunOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& spec = c.problem.bath;
  const auto modes = bath::expand_correlation(spec);
  json table = json::array();
  for (const auto& m : modes)
    table.push_back({{"sigma", m.sigma}, {"alpha", m.alpha}, {"nu", 0}, {"s", m.orbital}, {"p", m.pole},
                     {"eta_re", m.eta.real()}, {"eta_im", m.eta.imag()}, {"gamma_re", m.gamma.real()},
                     {"gamma_im", m.gamma.imag()}, {"kind", bath::to_string(m.kind)}});
  json sums = json::array();
  for (int a = 0; a < static_cast<int>(spec.reservoirs.size()); ++a)
    for (int u = 0; u < spec.n_orbitals; ++u) {
      const cplx s = bath::correlation_from_modes(modes, +1, 0.0, a, u) + bath::correlation_from_modes(modes, -1, 0.0, a, u);
      const auto& r = spec.reservoirs[static_cast<std::size_t>(a)];
      const double expect = std::numbers::pi * r.coupling[static_cast<std::size_t>(u)] * r.band_width *
                            bath::prefactor_value(spec.prefactor);
      sums.push_back({{"alpha", a}, {"s", u}, {"sum_re", s.real()}, {"sum_im", s.imag()}, {"expected", expect}});
    }

  std::string csv = "t,C_plus_re,C_plus_im,C_minus_re,C_minus_im,oracle_plus_re,oracle_plus_im,oracle_minus_re,oracle_minus_im\n";
  double worst = 0.0;
  const double c0 = std::abs(bath::correlation_from_modes(modes, +1, 0.0));
  for (double t : driver::output_grid(0.0, c.integrator.horizon, c.output.sample_dt)) {
    const cplx cp = bath::correlation_from_modes(modes, +1, t), cm = bath::correlation_from_modes(modes, -1, t);
    const cplx qp = bath::correlation_quadrature_oracle(spec, +1, t), qm = bath::correlation_quadrature_oracle(spec, -1, t);
    worst = std::max({worst, std::abs(cp - qp), std::abs(cm - qm)});
    csv += fmt17(t) + "," + fmt17(cp.real()) + "," + fmt17(cp.imag()) + "," + fmt17(cm.real()) + "," + fmt17(cm.imag()) +
           "," + fmt17(qp.real()) + "," + fmt17(qp.imag()) + "," + fmt17(qm.real()) + "," + fmt17(qm.imag()) + "\n";
  }
  const json summary = {{"n_modes", modes.size()}, {"max_abs_error", worst}, {"c0_plus", c0},
                        {"relative_error", c0 > 0.0 ? worst / c0 : worst}, {"sum_rule", sums}};
  write_atomic(o.out / "bath_correlation.csv", csv);
  write_atomic(o.out / "bath_modes.json", json{{"modes", table}, {"summary", summary}}.dump(2) + "\n");
  json m = manifest_head("bath", c, o);
  m["bath"] = summary;
  m["seconds"] = seconds_since(t0);
  write_manifest(m, o);
  return summary;
}

inline json run_basis(const RunConfig& c, const RunOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const Problem p = assemble(c.problem);
  const json b = basis_json(p);
  std::ostringstream trip;
  p.L.write_triplets(trip);
  write_atomic(o.out / "liouvillian.csv", trip.str());
  json m = manifest_head("basis", c, o);
  m["basis"] = b;
  m["convention"] = convention_json(p.convention);
  m["seconds"] = seconds_since(t0);
  write_manifest(m, o);
  return b;
}

inline std::string snapshots_json(const reference::Trajectory& tr, const dqme::RdtBasis& basis) {
  json snaps = json::array();
  for (const auto& s : tr.snapshots) {
    json v = json::array();
    for (const auto& x : s.values) v.push_back({x.real(), x.imag()});
    snaps.push_back({{"time", s.time}, {"values", v}});
  }
  return json{{"basis_hash", hex64(basis.hash())}, {"snapshots", snaps}}.dump() + "\n";
}

inline json run_propagate(const RunConfig& c, const RunOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const Problem p = assemble(c.problem);
  auto po = c.propagate_options();
  po.keep_snapshots = c.output.snapshots;
  const auto tr = reference::propagate_reference(p.L, p.basis, p.rho0, po);
  write_trajectory(tr, o.out / "trajectory.csv");
  if (c.output.snapshots) write_atomic(o.out / "snapshots.json", snapshots_json(tr, p.basis));
  double drift = 0.0;
  const cplx tr0 = tr.rows.front().trace;
  for (const auto& r : tr.rows) drift = std::max(drift, std::abs(r.trace - tr0));
  json m = manifest_head("propagate", c, o);
  m["basis"] = basis_json(p);
  m["convention"] = convention_json(p.convention);
  m["propagation"] = {{"rows", tr.size()}, {"max_trace_drift", drift}};
  m["seconds"] = seconds_since(t0);
  write_manifest(m, o);
  return m["propagation"];
}

// RDT of the reference propagator at time t (t must be a multiple of the integrator step after the quench).
inline Eigen::VectorXcd reference_state_at(const Problem& p, const RunConfig& c, double t) {
  const double span = t - p.rho0.time;
  if (span < 0.0) throw ConfigError("reference state requested before the quench");
  if (span == 0.0) return p.rho0.values;
  reference::PropagateOptions po = c.integrator;
  po.horizon = span;
  po.output_dt = span;
  po.keep_snapshots = true;
  return reference::propagate_reference(p.L, p.basis, p.rho0, po).snapshots.back().values;
}

struct TrainOutcome {
  driver::FullRun run;
  std::optional<reference::Trajectory> reference;
  std::optional<reference::Trajectory> extrapolation;
  json metrics;
  json manifest;
};

inline json stage_json(const driver::StageReport& s) {
  return {{"stage", s.stage},
          {"n_points", s.n_points},
          {"mean_spacing", s.mean_spacing},
          {"target", s.target},
          {"initial_loss", s.initial_loss},
          {"final_loss", s.final_loss},
          {"iterations", s.iterations},
          {"status", optim::to_string(s.status)},
          {"reached", s.reached},
          {"cusp_time", std::isnan(s.cusp_time) ? json(nullptr) : json(s.cusp_time)}};
}

inline std::string two_digits(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d", i);
  return buf;
}

inline TrainOutcome run_train(const RunConfig& c, const RunOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const Problem p = assemble(c.problem);
  const auto schedule = c.training_schedule();
  TrainOutcome out;

  std::vector<std::optional<Eigen::VectorXcd>> injected(schedule.subdomains.size());
  for (int i : c.schedule.reference_ic)
    injected[static_cast<std::size_t>(i)] = reference_state_at(p, c, schedule.subdomains[static_cast<std::size_t>(i)].t_start);

  driver::TrainOptions topts;
  topts.threads = o.threads;
  topts.keep_stage_models = o.keep_stage_models;
  if (o.log)
    topts.on_iteration = [&](int sub, int stage, const optim::HistoryRow& row) {
      if (row.iteration % 50 == 0)
        *o.log << "subdomain " << sub << " stage " << stage << " iteration " << row.iteration << " loss " << row.loss
               << "\n";
    };
  const driver::NetworkConfig net{c.network.hidden, c.network.layers, c.network.seed};
  out.run = driver::train_full_horizon(p.basis, p.L, p.rho0.values, schedule, net, c.output.sample_dt,
                                       o.override_failure, topts,
                                       [&](int i) { return injected[static_cast<std::size_t>(i)]; });
  const auto& run = out.run;

  for (std::size_t i = 0; i < run.models.size(); ++i) {
    save_model(run.models[i], p.basis, o.out / ("subdomain_" + two_digits(static_cast<int>(i)) + ".json"));
    for (const auto& s : run.reports[i].stages)
      write_atomic(o.out / ("loss_p" + two_digits(static_cast<int>(i)) + "_s" + std::to_string(s.stage) + ".csv"),
                   history_csv(s.history));
  }
  write_trajectory(run.trajectory, o.out / "trajectory.csv");

  json metrics = json::object();
  json jumps = json::array();
  for (std::size_t i = 1; i < run.models.size(); ++i) {
    const double tb = run.models[i].t_start;
    const double l = reference::observe(p.L, p.basis, pinn::rdt_eval(run.models[i - 1], p.basis, tb).values, tb).n_up;
    const double r = reference::observe(p.L, p.basis, pinn::rdt_eval(run.models[i], p.basis, tb).values, tb).n_up;
    jumps.push_back({{"t", tb}, {"n_up_jump", std::abs(l - r)}});
  }
  metrics["boundary_jumps"] = jumps;

  const double horizon_end = std::max(run.t_end, c.output.extrapolate_to);
  if (c.output.compare_reference && !run.models.empty()) {
    auto po = c.propagate_options();
    po.horizon = std::ceil(horizon_end / c.output.sample_dt - 1e-9) * c.output.sample_dt;
    out.reference = reference::propagate_reference(p.L, p.basis, p.rho0, po);
    write_trajectory(*out.reference, o.out / "reference.csv");
    const double a = run.models.front().t_start;
    for (const char* name : {"n_up", "I_R", "I_L"})
      metrics["E_" + std::string(name)] =
          driver::relative_error_metric(run.trajectory, *out.reference, driver::parse_observable(name), a, run.t_end);
    json per = json::array();
    for (const auto& m : run.models)
      per.push_back({{"t_start", m.t_start}, {"t_end", m.t_end},
                     {"E_n_up", driver::relative_error_metric(run.trajectory, *out.reference, driver::Observable::kNUp,
                                                              m.t_start, m.t_end)},
                     {"E_I_R", driver::relative_error_metric(run.trajectory, *out.reference,
                                                             driver::Observable::kCurrentR, m.t_start, m.t_end)}});
    metrics["per_subdomain"] = per;
  }
  if (c.output.extrapolate_to > 0.0 && !run.models.empty()) {
    const auto& last = run.models.back();
    if (!(c.output.extrapolate_to > last.t_end)) throw ConfigError("output.extrapolate_to must exceed the last subdomain");
    out.extrapolation =
        driver::model_trajectory(last, p.basis, p.L, last.t_start, c.output.extrapolate_to, c.output.sample_dt);
    write_trajectory(*out.extrapolation, o.out / "extrapolation.csv");
    if (out.reference) {
      double scale = 0.0;
      for (const auto& r : out.reference->rows) scale = std::max(scale, std::abs(r.trace));
      const double dev = driver::max_abs_deviation(*out.extrapolation, *out.reference, driver::Observable::kNUp,
                                                   last.t_end, c.output.extrapolate_to);
      metrics["extrapolation"] = {{"t_from", last.t_end}, {"t_to", c.output.extrapolate_to},
                                  {"max_abs_n_up_deviation", dev}, {"trace_scale", scale},
                                  {"relative_to_trace", dev / scale}};
    }
  }
  out.metrics = metrics;

  json m = manifest_head("train", c, o);
  m["basis"] = basis_json(p);
  m["convention"] = convention_json(p.convention);
  json subs = json::array();
  for (const auto& r : run.reports) {
    json st = json::array();
    for (const auto& s : r.stages) st.push_back(stage_json(s));
    subs.push_back({{"index", r.index}, {"t_start", r.t_start}, {"t_end", r.t_end}, {"passed", r.passed},
                    {"seconds", r.seconds}, {"stages", st}});
  }
  m["subdomains"] = subs;
  m["status"] = {{"completed", run.completed}, {"all_passed", run.all_passed}, {"t_end", run.t_end}};
  m["metrics"] = metrics;
  m["seconds"] = seconds_since(t0);
  write_manifest(m, o);
  out.manifest = m;
  return out;
}

inline json run_gradcheck(const RunConfig& c, const RunOptions& o) {
  const auto rep = pinn::gradient_check(c.gradcheck, o.threads);
  const json r = {{"n_states", rep.n_states}, {"n_parameters", rep.n_parameters}, {"errors", rep.errors},
                  {"worst", rep.worst}, {"tolerance", c.gradcheck.tolerance}, {"passed", rep.passed}};
  json m = manifest_head("gradcheck", c, o);
  m["gradcheck"] = r;
  write_manifest(m, o);
  return r;
}

// Relative time-integrated errors of two trajectory CSVs over their common interval.
inline json run_compare(const fs::path& a, const fs::path& b) {
  const auto ta = read_trajectory(a), tb = read_trajectory(b);
  if (ta.empty() || tb.empty()) throw ConfigError("compare: empty trajectory");
  const double t0 = std::max(ta.rows.front().t, tb.rows.front().t);
  const double t1 = std::min(ta.rows.back().t, tb.rows.back().t);
  json r = {{"t_start", t0}, {"t_end", t1}};
  for (const char* name : {"n_up", "I_L", "I_R", "trace_re"}) {
    try {
      r["E_" + std::string(name)] = driver::relative_error_metric(ta, tb, driver::parse_observable(name), t0, t1);
    } catch (const DivisionGuardError&) {
      r["E_" + std::string(name)] = nullptr;
    }
  }
  return r;
}

}  // namespace dqpinn::io
