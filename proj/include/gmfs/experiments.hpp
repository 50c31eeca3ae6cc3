#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gmfs/dynamics.hpp"
#include "gmfs/gaussian_oracle.hpp"
#include "gmfs/graphon.hpp"
#include "gmfs/sde_engine.hpp"

namespace gmfs {

inline constexpr const char* kVersion = "0.1.0";

struct GraphonConfig {
  std::string kind = "constant";  // constant | step | step_file | product
  double p = 1.0;
  std::vector<double> boundaries;
  std::vector<std::vector<double>> values;
  std::string path;
};

struct InitialConfig {
  std::string kind = "gaussian";  // point | gaussian | stationary
  double value = 0.0;
  double mean = 0.0;
  double variance = 1.0;
};

struct ModelConfig {
  std::string drift = "linear";  // linear (c1..c5) | mean_reverting (c1, c2)
  std::vector<double> coefficients{0.0, 2.0, 0.0, 0.5, 0.3};
  double sigma = 1.0;
  GraphonConfig graphon;
  EdgeMode edge_mode = EdgeMode::deterministic;
  InitialConfig initial;
  std::optional<double> stability_cap;
};

struct ExperimentConfig {
  std::string experiment;
  ModelConfig model;
  std::size_t n = 1000;
  std::vector<std::size_t> n_list;
  double step = 0.01;
  std::vector<double> h_list;
  std::vector<double> t_grid;
  double horizon = 0.0;
  std::size_t replicas = 8;
  std::uint64_t base_seed = 1;
  std::size_t bootstrap_resamples = 200;
  std::size_t oracle_grid = 64;
  double rate_slack = 0.8;
  std::string mode = "auto";  // ergodicity: auto | oracle | self

  // euler_sweep
  std::size_t reference_refinement = 16;
  std::optional<double> slope_lo, slope_hi;

  // lln_sweep
  double majorization_se = 3.0;
  double pooled_slope_max = -0.35;

  // interchange
  double residual_fraction = 0.2;

  // quenched_vs_annealed
  std::size_t families = 4;
  double burn_in = 5.0;

  // concentration
  std::size_t exact_up_to = 30;
  std::size_t dyadic_level = 5;
  double interval_lo = -4.0, interval_hi = 4.0;
  double band = 6.0;
  double wp = 2.0;
  std::vector<std::size_t> wp_n;
  std::size_t wp_replicas = 100;
  std::size_t wp_grid = 2048;

  std::string output = "out";

  void validate() const;
};

const std::vector<std::string>& experiment_names();
/// Acceptance-grade defaults for the named experiment.
ExperimentConfig default_config(const std::string& experiment);
/// JSON text; keys mirror ExperimentConfig, unknown keys are rejected.
ExperimentConfig parse_config(const std::string& json_text, const std::string& experiment_hint = "");
ExperimentConfig load_config(const std::string& path, const std::string& experiment_hint = "");
std::string config_to_json(const ExperimentConfig& config);

struct BuiltModel {
  DriftSpec drift;
  DiffusionSpec diffusion;
  Graphon graphon;
  InitialLaw initial;
  std::optional<LinearModel> linear;  // when the Gaussian oracle applies
};

BuiltModel build_model(const ModelConfig& model, std::size_t oracle_grid = 64);

enum class Verdict { pass, fail, inconclusive, info };
std::string to_string(Verdict v);

struct ResultRow {
  std::string sweep_var;
  double value = 0.0;
  std::string metric;
  double estimate = 0.0;
  double se = 0.0;
  std::size_t replicas = 0;
};

struct FitRow {
  std::string term;
  double rate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  Verdict verdict = Verdict::info;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<ResultRow> rows;
  std::vector<FitRow> fits;
  Verdict verdict = Verdict::info;
  std::vector<std::string> notes;
  double runtime_seconds = 0.0;

  const FitRow* fit(const std::string& term) const;
  /// First row with this metric (and sweep value, when given).
  const ResultRow* row(const std::string& metric, std::optional<double> value = std::nullopt) const;
};

ExperimentResult run_ergodicity(const ExperimentConfig& config);
ExperimentResult run_euler_sweep(const ExperimentConfig& config);
ExperimentResult run_lln_sweep(const ExperimentConfig& config);
ExperimentResult run_interchange(const ExperimentConfig& config);
ExperimentResult run_quenched_vs_annealed(const ExperimentConfig& config);
ExperimentResult run_concentration(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config);

std::string results_csv(const ExperimentResult& result);
std::string fit_csv(const ExperimentResult& result);
std::string meta_json(const ExperimentResult& result, const ExperimentConfig& config);
/// Writes results.csv, fit.csv and meta.json into `dir` (created if missing).
void write_outputs(const ExperimentResult& result, const ExperimentConfig& config, const std::string& dir);
/// 0 all PASS, 2 any FAIL, 3 inconclusive.
int exit_code(Verdict v);

/// Header line (n, d, h, seed, graphon hash) then one row per particle and snapshot: t, i, x...
void write_trajectory_csv(std::ostream& out, const std::vector<Snapshot>& snapshots, double h, std::uint64_t seed,
                          std::uint64_t graphon_hash);

/// %.17g formatting used by every table.
std::string format_number(double v);

}  // namespace gmfs
