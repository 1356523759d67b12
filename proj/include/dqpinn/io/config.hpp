#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "dqpinn/driver/schedule.hpp"
#include "dqpinn/driver/train.hpp"
#include "dqpinn/errors.hpp"
#include "dqpinn/io/files.hpp"
#include "dqpinn/pinn/gradcheck.hpp"
#include "dqpinn/problem.hpp"
#include "dqpinn/reference.hpp"

namespace dqpinn::io {

using json = nlohmann::ordered_json;

struct ScheduleOverride {
  int index = 0;
  std::vector<std::string> features;       // empty: keep the default map
  std::vector<driver::StagePlan> stages;   // empty: keep the default stages
};

struct ScheduleConfig {
  double horizon = 2.3;
  double width = 0.23;
  std::vector<double> boundaries;          // explicit boundaries override horizon/width
  std::vector<driver::StagePlan> stages{{0.015, 1e-4, 2000, 0}};
  std::vector<ScheduleOverride> overrides;
  std::vector<int> reference_ic;           // subdomains whose initial target comes from the reference propagator
  pinn::LossOptions loss;
};

struct NetworkSection {
  int layers = 4;
  int hidden = 35;
  std::uint64_t seed = 1;
  std::vector<std::string> features{"t", "t^2", "t^3"};
};

struct OutputConfig {
  double sample_dt = 0.01;
  bool compare_reference = true;
  double extrapolate_to = 0.0;  // > 0: evaluate the last model beyond its interval up to this time
  bool snapshots = false;       // propagate: also write full RDT snapshots
};

using GradcheckConfig = pinn::GradcheckOptions;

struct RunConfig {
  ProblemSpec problem = anderson_defaults(3.0);
  NetworkSection network;
  ScheduleConfig schedule;
  optim::OptimizerOptions optimizer;
  reference::PropagateOptions integrator;
  OutputConfig output;
  GradcheckConfig gradcheck;

  // Reference propagation sampled on the output grid.
  reference::PropagateOptions propagate_options() const {
    auto po = integrator;
    po.output_dt = output.sample_dt;
    return po;
  }

  std::vector<double> boundaries() const {
    if (!schedule.boundaries.empty()) {
      driver::validate_boundaries(schedule.boundaries);
      return schedule.boundaries;
    }
    return driver::plan_subdomains(schedule.horizon, schedule.width);
  }

  driver::TrainingSchedule training_schedule() const {
    driver::TrainingSchedule s;
    s.loss = schedule.loss;
    s.optimizer = optimizer;
    const auto b = boundaries();
    const auto base = pinn::FeatureMap::parse(network.features);
    for (std::size_t p = 0; p + 1 < b.size(); ++p) {
      driver::SubdomainPlan sp;
      sp.t_start = b[p];
      sp.t_end = b[p + 1];
      sp.features = base;
      sp.stages = schedule.stages;
      s.subdomains.push_back(std::move(sp));
    }
    for (const auto& o : schedule.overrides) {
      if (o.index < 0 || o.index >= static_cast<int>(s.subdomains.size()))
        throw ConfigError("schedule override index out of range");
      auto& sp = s.subdomains[static_cast<std::size_t>(o.index)];
      if (!o.features.empty()) sp.features = pinn::FeatureMap::parse(o.features);
      if (!o.stages.empty()) sp.stages = o.stages;
    }
    for (int i : schedule.reference_ic)
      if (i < 0 || i >= static_cast<int>(s.subdomains.size())) throw ConfigError("reference_ic index out of range");
    s.validate();
    return s;
  }

  void validate() const {
    problem.system.validate();
    problem.bath.validate();
    if (problem.m_max < 0) throw ConfigError("basis.m_max must be >= 0");
    if (network.layers < 1 || network.hidden < 1) throw ConfigError("network shape is invalid");
    optimizer.validate();
    (void)training_schedule();
    (void)reference::steps_per_output(propagate_options());
    if (!(integrator.horizon > 0.0)) throw ConfigError("integrator.horizon must be positive");
    if (!(output.sample_dt > 0.0)) throw ConfigError("output.sample_dt must be positive");
    gradcheck.validate();
  }
};

namespace detail {

inline json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    json o = json::object();
    for (const auto& [k, v] : *t) o[std::string(k.str())] = toml_to_json(v);
    return o;
  }
  if (const auto* a = n.as_array()) {
    json arr = json::array();
    for (const auto& v : *a) arr.push_back(toml_to_json(v));
    return arr;
  }
  if (const auto* v = n.as_integer()) return v->get();
  if (const auto* v = n.as_floating_point()) return v->get();
  if (const auto* v = n.as_boolean()) return v->get();
  if (const auto* v = n.as_string()) return v->get();
  throw ConfigError("config: unsupported TOML value type (dates and times are not accepted)");
}

// Strict object reader: every key must be consumed, unknown keys are errors.
class Reader {
 public:
  Reader(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) throw ConfigError("config: '" + ctx_ + "' must be a table");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  template <class T>
  void get(const std::string& k, T& out) {
    if (!j_.contains(k)) return;
    used_.insert(k);
    const json& v = j_.at(k);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
        out = v.get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        out = v.get<T>();
      } else {
        out = v.get<T>();
      }
    } catch (const std::exception&) {
      throw ConfigError("config: '" + ctx_ + "." + k + "' has the wrong type");
    }
  }

  const json& sub(const std::string& k) {
    used_.insert(k);
    return j_.at(k);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("config: unknown key '" + ctx_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> used_;
};

inline double kT_of(double beta) { return 1.0 / beta; }

inline driver::StagePlan read_stage(const json& j, const std::string& ctx) {
  driver::StagePlan s;
  Reader r(j, ctx);
  r.get("spacing", s.spacing);
  r.get("target", s.target);
  r.get("max_iterations", s.max_iterations);
  r.get("cusp_extras", s.cusp_extras);
  r.finish();
  return s;
}

inline std::vector<driver::StagePlan> read_stages(const json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) throw ConfigError("config: '" + ctx + "' must be a non-empty array of tables");
  std::vector<driver::StagePlan> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_stage(j[i], ctx + "[" + std::to_string(i) + "]"));
  return out;
}

inline json stage_json(const driver::StagePlan& s) {
  return json{{"spacing", s.spacing}, {"target", s.target}, {"max_iterations", s.max_iterations},
              {"cusp_extras", s.cusp_extras}};
}

inline std::string scheme_name(bath::PoleScheme s) { return s == bath::PoleScheme::kPade ? "pade" : "matsubara"; }
inline std::string prefactor_name(bath::Prefactor p) {
  return p == bath::Prefactor::kLiteral ? "literal" : "inverse_pi";
}

}  // namespace detail

inline RunConfig config_from_json(const json& root) {
  RunConfig c;
  detail::Reader top(root, "config");
  if (top.has("system")) {
    detail::Reader r(top.sub("system"), "system");
    auto& s = c.problem.system;
    r.get("ns", s.ns);
    r.get("eps0", s.eps0);
    r.get("u0", s.u0);
    r.get("d_eps", s.d_eps);
    r.get("d_u", s.d_u);
    r.get("t_quench", s.t_quench);
    r.finish();
  }
  if (top.has("bath")) {
    detail::Reader r(top.sub("bath"), "bath");
    auto& b = c.problem.bath;
    r.get("n_orbitals", b.n_orbitals);
    r.get("pade_order", b.pade_order);
    std::string scheme = detail::scheme_name(b.scheme), pref = detail::prefactor_name(b.prefactor);
    r.get("scheme", scheme);
    r.get("prefactor", pref);
    if (scheme == "pade") b.scheme = bath::PoleScheme::kPade;
    else if (scheme == "matsubara") b.scheme = bath::PoleScheme::kMatsubara;
    else throw ConfigError("config: bath.scheme must be 'pade' or 'matsubara'");
    if (pref == "literal") b.prefactor = bath::Prefactor::kLiteral;
    else if (pref == "inverse_pi") b.prefactor = bath::Prefactor::kInversePi;
    else throw ConfigError("config: bath.prefactor must be 'literal' or 'inverse_pi'");
    if (r.has("reservoirs")) {
      const json& arr = r.sub("reservoirs");
      if (!arr.is_array() || arr.empty()) throw ConfigError("config: bath.reservoirs must be a non-empty array");
      b.reservoirs.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        detail::Reader rr(arr[i], "bath.reservoirs[" + std::to_string(i) + "]");
        bath::Reservoir res;
        double kT = 1.0;
        rr.get("name", res.name);
        rr.get("kT", kT);
        if (!(kT > 0.0)) throw ConfigError("config: reservoir kT must be positive");
        res.beta = 1.0 / kT;
        rr.get("mu", res.mu);
        rr.get("band_center", res.band_center);
        rr.get("band_width", res.band_width);
        rr.get("coupling", res.coupling);
        rr.finish();
        b.reservoirs.push_back(res);
      }
    }
    r.finish();
  }
  if (top.has("basis")) {
    detail::Reader r(top.sub("basis"), "basis");
    r.get("m_max", c.problem.m_max);
    r.get("filter", c.problem.filter);
    r.finish();
  }
  if (top.has("initial")) {
    detail::Reader r(top.sub("initial"), "initial");
    std::string mode = c.problem.initial == InitialState::kFactorized ? "factorized" : "relaxed";
    double kT = detail::kT_of(c.problem.eq_beta);
    r.get("mode", mode);
    r.get("kT", kT);
    r.get("mu", c.problem.eq_mu);
    r.get("relax_time", c.problem.relax_time);
    r.get("relax_dt", c.problem.relax_dt);
    r.finish();
    if (mode == "factorized") c.problem.initial = InitialState::kFactorized;
    else if (mode == "relaxed") c.problem.initial = InitialState::kRelaxed;
    else throw ConfigError("config: initial.mode must be 'factorized' or 'relaxed'");
    if (!(kT > 0.0)) throw ConfigError("config: initial.kT must be positive");
    c.problem.eq_beta = 1.0 / kT;
  }
  if (top.has("network")) {
    detail::Reader r(top.sub("network"), "network");
    r.get("layers", c.network.layers);
    r.get("hidden", c.network.hidden);
    r.get("seed", c.network.seed);
    r.get("features", c.network.features);
    r.finish();
  }
  if (top.has("schedule")) {
    detail::Reader r(top.sub("schedule"), "schedule");
    auto& s = c.schedule;
    r.get("horizon", s.horizon);
    r.get("width", s.width);
    r.get("boundaries", s.boundaries);
    if (r.has("stages")) s.stages = detail::read_stages(r.sub("stages"), "schedule.stages");
    r.get("reference_ic", s.reference_ic);
    r.get("w_residual", s.loss.w_residual);
    r.get("w_initial", s.loss.w_initial);
    r.get("w_trace", s.loss.w_trace);
    r.get("lambda", s.loss.lambda);
    r.get("dt", s.loss.dt);
    r.get("trace_guard", s.loss.trace_guard);
    if (r.has("overrides")) {
      const json& arr = r.sub("overrides");
      if (!arr.is_array()) throw ConfigError("config: schedule.overrides must be an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string ctx = "schedule.overrides[" + std::to_string(i) + "]";
        detail::Reader rr(arr[i], ctx);
        ScheduleOverride o;
        if (!rr.has("index")) throw ConfigError("config: " + ctx + " needs an index");
        rr.get("index", o.index);
        rr.get("features", o.features);
        if (rr.has("stages")) o.stages = detail::read_stages(rr.sub("stages"), ctx + ".stages");
        rr.finish();
        s.overrides.push_back(std::move(o));
      }
    }
    r.finish();
  }
  if (top.has("optimizer")) {
    detail::Reader r(top.sub("optimizer"), "optimizer");
    r.get("grad_tol", c.optimizer.grad_tol);
    r.get("c1", c.optimizer.c1);
    r.get("c2", c.optimizer.c2);
    r.get("initial_step", c.optimizer.initial_step);
    r.get("max_line_search", c.optimizer.max_line_search);
    r.finish();
  }
  if (top.has("integrator")) {
    detail::Reader r(top.sub("integrator"), "integrator");
    r.get("dt", c.integrator.dt);
    r.get("horizon", c.integrator.horizon);
    r.get("trace_drift_limit", c.integrator.trace_drift_limit);
    r.finish();
  }
  if (top.has("output")) {
    detail::Reader r(top.sub("output"), "output");
    r.get("sample_dt", c.output.sample_dt);
    r.get("compare_reference", c.output.compare_reference);
    r.get("extrapolate_to", c.output.extrapolate_to);
    r.get("snapshots", c.output.snapshots);
    r.finish();
  }
  if (top.has("gradcheck")) {
    detail::Reader r(top.sub("gradcheck"), "gradcheck");
    auto& g = c.gradcheck;
    r.get("level_energy", g.level_energy);
    r.get("coupling_re", g.coupling_re);
    r.get("coupling_im", g.coupling_im);
    r.get("kT", g.kT);
    r.get("mu", g.mu);
    r.get("eps", g.eps);
    r.get("hidden", g.hidden);
    r.get("layers", g.layers);
    r.get("draws", g.draws);
    r.get("points", g.points);
    r.get("t_start", g.t_start);
    r.get("t_end", g.t_end);
    r.get("dt", g.dt);
    r.get("fd_step", g.fd_step);
    r.get("tolerance", g.tolerance);
    r.get("seed", g.seed);
    r.finish();
  }
  top.finish();
  if (c.problem.bath.n_orbitals != c.problem.system.ns)
    throw ConfigError("config: bath.n_orbitals must equal system.ns");
  c.validate();
  return c;
}

// Full effective configuration, defaults included; config_from_json(config_to_json(c)) reproduces c.
inline json config_to_json(const RunConfig& c) {
  json j;
  const auto& s = c.problem.system;
  j["system"] = {{"ns", s.ns}, {"eps0", s.eps0}, {"u0", s.u0}, {"d_eps", s.d_eps}, {"d_u", s.d_u},
                 {"t_quench", s.t_quench}};
  json res = json::array();
  for (const auto& r : c.problem.bath.reservoirs)
    res.push_back({{"name", r.name}, {"kT", 1.0 / r.beta}, {"mu", r.mu}, {"band_center", r.band_center},
                   {"band_width", r.band_width}, {"coupling", r.coupling}});
  j["bath"] = {{"n_orbitals", c.problem.bath.n_orbitals}, {"pade_order", c.problem.bath.pade_order},
               {"scheme", detail::scheme_name(c.problem.bath.scheme)},
               {"prefactor", detail::prefactor_name(c.problem.bath.prefactor)}, {"reservoirs", res}};
  j["basis"] = {{"m_max", c.problem.m_max}, {"filter", c.problem.filter}};
  j["initial"] = {{"mode", c.problem.initial == InitialState::kFactorized ? "factorized" : "relaxed"},
                  {"kT", 1.0 / c.problem.eq_beta}, {"mu", c.problem.eq_mu}, {"relax_time", c.problem.relax_time},
                  {"relax_dt", c.problem.relax_dt}};
  j["network"] = {{"layers", c.network.layers}, {"hidden", c.network.hidden}, {"seed", c.network.seed},
                  {"features", c.network.features}};
  json stages = json::array();
  for (const auto& st : c.schedule.stages) stages.push_back(detail::stage_json(st));
  json ov = json::array();
  for (const auto& o : c.schedule.overrides) {
    json e{{"index", o.index}};
    if (!o.features.empty()) e["features"] = o.features;
    if (!o.stages.empty()) {
      json st = json::array();
      for (const auto& x : o.stages) st.push_back(detail::stage_json(x));
      e["stages"] = st;
    }
    ov.push_back(e);
  }
  const auto& l = c.schedule.loss;
  j["schedule"] = {{"horizon", c.schedule.horizon}, {"width", c.schedule.width},
                   {"boundaries", c.schedule.boundaries}, {"stages", stages},
                   {"overrides", ov}, {"reference_ic", c.schedule.reference_ic},
                   {"w_residual", l.w_residual}, {"w_initial", l.w_initial}, {"w_trace", l.w_trace},
                   {"lambda", l.lambda}, {"dt", l.dt}, {"trace_guard", l.trace_guard}};
  j["optimizer"] = {{"grad_tol", c.optimizer.grad_tol}, {"c1", c.optimizer.c1}, {"c2", c.optimizer.c2},
                    {"initial_step", c.optimizer.initial_step}, {"max_line_search", c.optimizer.max_line_search}};
  j["integrator"] = {{"dt", c.integrator.dt}, {"horizon", c.integrator.horizon},
{"trace_drift_limit", c.integrator.trace_drift_limit}};
  j["output"] = {{"sample_dt", c.output.sample_dt}, {"compare_reference", c.output.compare_reference},
                 {"extrapolate_to", c.output.extrapolate_to}, {"snapshots", c.output.snapshots}};
  const auto& g = c.gradcheck;
  j["gradcheck"] = {{"level_energy", g.level_energy}, {"coupling_re", g.coupling_re}, {"coupling_im", g.coupling_im},
                    {"kT", g.kT}, {"mu", g.mu}, {"eps", g.eps}, {"hidden", g.hidden}, {"layers", g.layers},
                    {"draws", g.draws}, {"points", g.points}, {"t_start", g.t_start}, {"t_end", g.t_end},
                    {"dt", g.dt}, {"fd_step", g.fd_step}, {"tolerance", g.tolerance}, {"seed", g.seed}};
  return j;
}

inline RunConfig parse_toml_config(const std::string& text, const std::string& source = "config") {
  toml::table t;
  try {
    t = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    throw ConfigError("config: TOML parse error: " + std::string(e.description()));
  }
  return config_from_json(detail::toml_to_json(t));
}

// Accepts a TOML run config or a JSON run manifest (whose "config" member is the full effective config).
inline RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  if (path.extension() == ".json") {
    json m;
    try {
      m = json::parse(text);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("manifest: JSON parse error: ") + e.what());
    }
    if (!m.is_object() || !m.contains("config")) throw ConfigError("manifest: missing 'config' member");
    return config_from_json(m.at("config"));
  }
  return parse_toml_config(text, path.string());
}

}  // namespace dqpinn::io
