#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gmfs/errors.hpp"
#include "gmfs/experiments.hpp"
#include "gmfs/parallel.hpp"

namespace gmfs {

using nlohmann::json;

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"ergodicity",  "euler_sweep",          "lln_sweep",
                                              "interchange", "quenched_vs_annealed", "concentration"};
  return names;
}

namespace {

std::vector<double> linspace_step(double lo, double hi, double step) {
  std::vector<double> v;
  const auto count = static_cast<std::size_t>(std::llround((hi - lo) / step));
  for (std::size_t k = 0; k <= count; ++k) v.push_back(lo + static_cast<double>(k) * step);
  return v;
}

}  // namespace

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  if (experiment == "ergodicity") {
    c.model.drift = "mean_reverting";
    c.model.coefficients = {2.0, 0.5};
    c.model.initial = {"point", 3.0, 0.0, 0.0};
    c.n = 2000;
    c.replicas = 8;
    c.step = 0.01;
    c.t_grid = linspace_step(0.0, 4.0, 0.25);
  } else if (experiment == "euler_sweep") {
    c.n = 200;
    c.replicas = 8;
    c.horizon = 10.0;
    c.h_list = {0.025, 0.05, 0.1, 0.2};
    c.t_grid = linspace_step(1.0, 10.0, 1.0);
    c.model.stability_cap = 0.2;
  } else if (experiment == "lln_sweep") {
    c.n_list = {250, 500, 1000, 2000, 4000};
    c.replicas = 16;
    c.step = 0.002;
    c.t_grid = {0.0, 0.5, 1.0, 2.0, 4.0};
  } else if (experiment == "interchange") {
    c.model.drift = "mean_reverting";
    c.model.coefficients = {2.0, 0.5};
    c.model.initial = {"point", 3.0, 0.0, 0.0};
    c.model.stability_cap = 0.25;
    c.n_list = {250, 1000, 4000};
    c.h_list = {1.0 / 64, 1.0 / 16, 1.0 / 4};
    c.t_grid = {0.5, 1.0, 2.0, 4.0, 8.0};
    c.replicas = 8;
    c.bootstrap_resamples = 50;
  } else if (experiment == "quenched_vs_annealed") {
    c.model.drift = "mean_reverting";
    c.model.coefficients = {2.0, 0.5};
    c.model.graphon.p = 0.5;
    c.model.edge_mode = EdgeMode::bernoulli;
    c.n = 500;
    c.replicas = 4;
    c.families = 4;
    c.step = 0.01;
    c.t_grid = linspace_step(0.0, 3.0, 0.25);
  } else if (experiment == "concentration") {
    c.model.coefficients = {1.0, 2.0, 0.0, 0.5, 0.3};
    c.model.graphon.kind = "product";
    c.n_list = {1, 2, 5, 10, 30, 100, 1000, 10000};
    c.replicas = 2000;
    c.wp_n = {10, 100, 1000};
  } else {
    throw DomainError("unknown experiment '" + experiment + "'");
  }
  return c;
}

void ExperimentConfig::validate() const {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), experiment) == names.end())
    throw DomainError("unknown experiment '" + experiment + "'");
  auto sorted_nonempty = [](const auto& v, const char* what, bool needed) {
    if (needed && v.empty()) throw DomainError(std::string(what) + " must be nonempty");
    for (std::size_t i = 1; i < v.size(); ++i)
      if (!(v[i] > v[i - 1])) throw DomainError(std::string(what) + " must be strictly increasing");
  };
  sorted_nonempty(t_grid, "t_grid", experiment != "concentration");
  sorted_nonempty(n_list, "n_list", experiment == "lln_sweep" || experiment == "interchange" ||
                                        experiment == "concentration");
  sorted_nonempty(h_list, "h_list", experiment == "euler_sweep" || experiment == "interchange");
  sorted_nonempty(wp_n, "wp_n", false);
  if (replicas == 0) throw DomainError("replicas must be >= 1");
  if (!(step > 0.0)) throw DomainError("step must be positive");
  if (!t_grid.empty() && t_grid.front() < 0.0) throw DomainError("t_grid must be non-negative");
  if (mode != "auto" && mode != "oracle" && mode != "self") throw DomainError("mode must be auto, oracle or self");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

EdgeMode parse_edge_mode(const std::string& s) {
  if (s == "deterministic") return EdgeMode::deterministic;
  if (s == "bernoulli") return EdgeMode::bernoulli;
  throw DomainError("edge_mode must be deterministic or bernoulli");
}

std::string edge_mode_name(EdgeMode m) { return m == EdgeMode::deterministic ? "deterministic" : "bernoulli"; }

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw DomainError("unknown config key '" + where + key + "'");
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_model(const json& j, ModelConfig& m) {
  reject_unknown(j, {"drift", "coefficients", "sigma", "graphon", "edge_mode", "initial", "stability_cap"}, "model.");
  take(j, "drift", m.drift);
  take(j, "coefficients", m.coefficients);
  take(j, "sigma", m.sigma);
  if (j.contains("edge_mode")) m.edge_mode = parse_edge_mode(j.at("edge_mode").get<std::string>());
  if (j.contains("stability_cap")) {
    if (j.at("stability_cap").is_null())
      m.stability_cap.reset();
    else
      m.stability_cap = j.at("stability_cap").get<double>();
  }
  if (j.contains("graphon")) {
    const json& g = j.at("graphon");
    reject_unknown(g, {"kind", "p", "boundaries", "values", "path"}, "model.graphon.");
    take(g, "kind", m.graphon.kind);
    take(g, "p", m.graphon.p);
    take(g, "boundaries", m.graphon.boundaries);
    take(g, "values", m.graphon.values);
    take(g, "path", m.graphon.path);
  }
  if (j.contains("initial")) {
    const json& i = j.at("initial");
    reject_unknown(i, {"kind", "value", "mean", "variance"}, "model.initial.");
    take(i, "kind", m.initial.kind);
    take(i, "value", m.initial.value);
    take(i, "mean", m.initial.mean);
    take(i, "variance", m.initial.variance);
  }
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ExperimentConfig parse_config(const std::string& json_text, const std::string& experiment_hint) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DomainError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DomainError("config must be a JSON object");
  std::string name = j.value("experiment", experiment_hint);
  if (name.empty()) throw DomainError("config does not name an experiment");
  if (!experiment_hint.empty() && name != experiment_hint)
    throw DomainError("config is for '" + name + "' but '" + experiment_hint + "' was requested");
  ExperimentConfig c = default_config(name);
  reject_unknown(j,
                 {"experiment", "model", "n", "n_list", "step", "h_list", "t_grid", "horizon", "replicas", "base_seed",
                  "bootstrap_resamples", "oracle_grid", "rate_slack", "mode", "reference_refinement", "slope_lo",
                  "slope_hi", "majorization_se", "pooled_slope_max", "residual_fraction", "families", "burn_in",
                  "exact_up_to", "dyadic_level", "interval_lo", "interval_hi", "band", "wp", "wp_n", "wp_replicas",
                  "wp_grid", "output"},
                 "");
  try {
    if (j.contains("model")) read_model(j.at("model"), c.model);
    take(j, "n", c.n);
    take(j, "n_list", c.n_list);
    take(j, "step", c.step);
    take(j, "h_list", c.h_list);
    take(j, "t_grid", c.t_grid);
    take(j, "horizon", c.horizon);
    take(j, "replicas", c.replicas);
    take(j, "base_seed", c.base_seed);
    take(j, "bootstrap_resamples", c.bootstrap_resamples);
    take(j, "oracle_grid", c.oracle_grid);
    take(j, "rate_slack", c.rate_slack);
    take(j, "mode", c.mode);
    take(j, "reference_refinement", c.reference_refinement);
    if (j.contains("slope_lo")) c.slope_lo = j.at("slope_lo").get<double>();
    if (j.contains("slope_hi")) c.slope_hi = j.at("slope_hi").get<double>();
    take(j, "majorization_se", c.majorization_se);
    take(j, "pooled_slope_max", c.pooled_slope_max);
    take(j, "residual_fraction", c.residual_fraction);
    take(j, "families", c.families);
    take(j, "burn_in", c.burn_in);
    take(j, "exact_up_to", c.exact_up_to);
    take(j, "dyadic_level", c.dyadic_level);
    take(j, "interval_lo", c.interval_lo);
    take(j, "interval_hi", c.interval_hi);
    take(j, "band", c.band);
    take(j, "wp", c.wp);
    take(j, "wp_n", c.wp_n);
    take(j, "wp_replicas", c.wp_replicas);
    take(j, "wp_grid", c.wp_grid);
    take(j, "output", c.output);
  } catch (const json::exception& e) {
    throw DomainError(std::string("config has a value of the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::string& experiment_hint) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), experiment_hint);
}

std::string config_to_json(const ExperimentConfig& c) {
  json g{{"kind", c.model.graphon.kind},
         {"p", c.model.graphon.p},
         {"boundaries", c.model.graphon.boundaries},
         {"values", c.model.graphon.values},
         {"path", c.model.graphon.path}};
  json init{{"kind", c.model.initial.kind},
            {"value", c.model.initial.value},
            {"mean", c.model.initial.mean},
            {"variance", c.model.initial.variance}};
  json model{{"drift", c.model.drift},
             {"coefficients", c.model.coefficients},
             {"sigma", c.model.sigma},
             {"graphon", g},
             {"edge_mode", edge_mode_name(c.model.edge_mode)},
             {"initial", init},
             {"stability_cap", optional_json(c.model.stability_cap)}};
  json j{{"experiment", c.experiment},
         {"model", model},
         {"n", c.n},
         {"n_list", c.n_list},
         {"step", c.step},
         {"h_list", c.h_list},
         {"t_grid", c.t_grid},
         {"horizon", c.horizon},
         {"replicas", c.replicas},
         {"base_seed", c.base_seed},
         {"bootstrap_resamples", c.bootstrap_resamples},
         {"oracle_grid", c.oracle_grid},
         {"rate_slack", c.rate_slack},
         {"mode", c.mode},
         {"reference_refinement", c.reference_refinement},
         {"majorization_se", c.majorization_se},
         {"pooled_slope_max", c.pooled_slope_max},
         {"residual_fraction", c.residual_fraction},
         {"families", c.families},
         {"burn_in", c.burn_in},
         {"exact_up_to", c.exact_up_to},
         {"dyadic_level", c.dyadic_level},
         {"interval_lo", c.interval_lo},
         {"interval_hi", c.interval_hi},
         {"band", c.band},
         {"wp", c.wp},
         {"wp_n", c.wp_n},
         {"wp_replicas", c.wp_replicas},
         {"wp_grid", c.wp_grid},
         {"output", c.output}};
  if (c.slope_lo) j["slope_lo"] = *c.slope_lo;
  if (c.slope_hi) j["slope_hi"] = *c.slope_hi;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Model

BuiltModel build_model(const ModelConfig& m, std::size_t oracle_grid) {
  const auto& c = m.coefficients;
  auto drift = [&] {
    if (m.drift == "linear") {
      if (c.size() != 5) throw DomainError("linear drift needs 5 coefficients c1..c5");
      return DriftSpec::linear(c[0], c[1], c[2], c[3], c[4]);
    }
    if (m.drift == "mean_reverting") {
      if (c.size() != 2) throw DomainError("mean_reverting drift needs 2 coefficients c1, c2");
      return DriftSpec::mean_reverting(c[0], c[1]);
    }
    throw DomainError("unknown drift '" + m.drift + "'");
  }();
  DiffusionSpec diffusion = DiffusionSpec::scalar(m.sigma, 1);

  auto graphon = [&] {
    const auto& g = m.graphon;
    if (g.kind == "constant") return Graphon::constant(g.p);
    if (g.kind == "step") {
      const std::size_t k = g.values.size();
      Matrix v(k, k);
      for (std::size_t a = 0; a < k; ++a) {
        if (g.values[a].size() != k) throw DomainError("step graphon values must be K x K");
        for (std::size_t b = 0; b < k; ++b) v(a, b) = g.values[a][b];
      }
      return Graphon::step(StepKernel(g.boundaries, std::move(v)));
    }
    if (g.kind == "step_file") return Graphon::step(load_step_kernel(g.path));
    if (g.kind == "product")
      return Graphon::closed_form([](double u, double v) { return u * v; }, "product(u*v)").with_lipschitz(1.0);
    throw DomainError("unknown graphon kind '" + g.kind + "'");
  }();

  std::optional<LinearModel> linear;
  try {
    linear = LinearModel::from(drift, diffusion);
  } catch (const CapabilityError&) {
  }

  InitialLaw initial;
  const auto& i = m.initial;
  if (i.kind == "point") {
    initial = InitialLaw::point(i.value);
  } else if (i.kind == "gaussian") {
    initial = InitialLaw::gaussian(i.mean, i.variance);
  } else if (i.kind == "stationary") {
    if (!linear) throw CapabilityError("stationary initial law needs the Gaussian oracle (linear d = 1 model)");
    auto field = std::make_shared<MomentField>(solve_stationary(graphon, *linear, oracle_grid).field);
    initial = InitialLaw::gaussian_by_label([field](double u) { return field->mean_at(u); },
                                            [field](double u) { return field->variance_at(u); }, "stationary(oracle)");
  } else {
    throw DomainError("unknown initial law '" + i.kind + "'");
  }
  return BuiltModel{std::move(drift), std::move(diffusion), std::move(graphon), std::move(initial), linear};
}

// ---------------------------------------------------------------------------
// Output

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    case Verdict::inconclusive: return "INCONCLUSIVE";
    case Verdict::info: return "INFO";
  }
  return "INFO";
}

int exit_code(Verdict v) {
  switch (v) {
    case Verdict::fail: return 2;
    case Verdict::inconclusive: return 3;
    default: return 0;
  }
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const FitRow* ExperimentResult::fit(const std::string& term) const {
  for (const auto& f : fits)
    if (f.term == term) return &f;
  return nullptr;
}

const ResultRow* ExperimentResult::row(const std::string& metric, std::optional<double> value) const {
  for (const auto& r : rows)
    if (r.metric == metric && (!value || r.value == *value)) return &r;
  return nullptr;
}

std::string results_csv(const ExperimentResult& r) {
  std::string out = "sweep_var,value,metric,estimate,se,replicas\n";
  for (const auto& row : r.rows)
    out += row.sweep_var + "," + format_number(row.value) + "," + row.metric + "," + format_number(row.estimate) + "," +
           format_number(row.se) + "," + std::to_string(row.replicas) + "\n";
  return out;
}

std::string fit_csv(const ExperimentResult& r) {
  std::string out = "term,rate,ci_lo,ci_hi,pass\n";
  for (const auto& f : r.fits)
    out += f.term + "," + format_number(f.rate) + "," + format_number(f.ci_lo) + "," + format_number(f.ci_hi) + "," +
           to_string(f.verdict) + "\n";
  return out;
}

std::string meta_json(const ExperimentResult& r, const ExperimentConfig& c) {
  json j{{"experiment", r.experiment},
         {"version", kVersion},
         {"seed", c.base_seed},
         {"threads", num_threads()},
         {"runtime_seconds", r.runtime_seconds},
         {"verdict", to_string(r.verdict)},
         {"notes", r.notes},
         {"config", json::parse(config_to_json(c))}};
  return j.dump(2) + "\n";
}

void write_outputs(const ExperimentResult& r, const ExperimentConfig& c, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error(std::string("cannot write ") + name);
    out << text;
  };
  put("results.csv", results_csv(r));
  put("fit.csv", fit_csv(r));
  put("meta.json", meta_json(r, c));
}

void write_trajectory_csv(std::ostream& out, const std::vector<Snapshot>& snapshots, double h, std::uint64_t seed,
                          std::uint64_t graphon_hash) {
  if (snapshots.empty()) return;
  const auto& s0 = snapshots.front().state;
  out << "# n=" << s0.n << " d=" << s0.d << " h=" << format_number(h) << " seed=" << seed
      << " graphon_hash=" << graphon_hash << "\n";
  out << "t,i";
  for (std::size_t c = 0; c < s0.d; ++c) out << ",x" << c;
  out << "\n";
  for (const auto& snap : snapshots)
    for (std::size_t i = 0; i < snap.state.n; ++i) {
      out << format_number(snap.t) << "," << i;
      for (double v : snap.state.position(i)) out << "," << format_number(v);
      out << "\n";
    }
}

}  // namespace gmfs
