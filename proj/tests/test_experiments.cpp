#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gmfs/errors.hpp"
#include "gmfs/experiments.hpp"
#include "gmfs/parallel.hpp"

using namespace gmfs;

namespace {

ExperimentConfig small_ergodicity() {
  auto c = default_config("ergodicity");
  c.n = 300;
  c.replicas = 4;
  c.bootstrap_resamples = 40;
  return c;
}

}  // namespace

TEST_CASE("config parsing is strict and round-trips") {
  const auto c = parse_config(R"({"experiment": "lln_sweep", "replicas": 3, "model": {"sigma": 0.5}})");
  CHECK(c.experiment == "lln_sweep");
  CHECK(c.replicas == 3);
  CHECK(c.model.sigma == 0.5);
  CHECK(c.n_list == default_config("lln_sweep").n_list);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "lln_sweep", "replica": 3})"), DomainError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "lln_sweep", "model": {"sigmaa": 1}})"), DomainError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "nope"})"), DomainError);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "ergodicity"})", "lln_sweep"), DomainError);
  CHECK_THROWS_AS(parse_config("{not json"), DomainError);
  for (const auto& name : experiment_names()) {
    const auto d = default_config(name);
    CHECK_NOTHROW(d.validate());
    const auto back = parse_config(config_to_json(d));
    CHECK(config_to_json(back) == config_to_json(d));
  }
}

TEST_CASE("validation rejects unsorted or empty sweeps") {
  auto c = default_config("lln_sweep");
  c.n_list = {1000, 500};
  CHECK_THROWS_AS(c.validate(), DomainError);
  c.n_list.clear();
  CHECK_THROWS_AS(c.validate(), DomainError);
  auto e = default_config("euler_sweep");
  e.h_list = {0.1, 0.05};
  CHECK_THROWS_AS(e.validate(), DomainError);
}

TEST_CASE("build_model") {
  ModelConfig m;
  m.drift = "mean_reverting";
  m.coefficients = {2.0, 0.5};
  const auto b = build_model(m);
  CHECK(b.drift.kappa() == 1.5);
  REQUIRE(b.linear.has_value());
  CHECK(b.linear->c.c2 == 2.5);
  m.coefficients = {2.0};
  CHECK_THROWS_AS(build_model(m), DomainError);
  ModelConfig s;
  s.initial.kind = "stationary";
  s.graphon.kind = "product";
  const auto st = build_model(s, 32);
  CHECK(st.initial.variance(0.5) > 0.0);
}

TEST_CASE("formatting and exit codes") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(NAN) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
  CHECK(exit_code(Verdict::pass) == 0);
  CHECK(exit_code(Verdict::info) == 0);
  CHECK(exit_code(Verdict::fail) == 2);
  CHECK(exit_code(Verdict::inconclusive) == 3);
}

TEST_CASE("ergodicity: decay from a point mass and a stationary start") {
  const auto r = run_ergodicity(small_ergodicity());
  const auto* f = r.fit("decay_rate");
  REQUIRE(f != nullptr);
  CHECK(f->rate >= 0.6);
  CHECK(r.fit("bound_majorizes")->verdict == Verdict::pass);
  CHECK(r.fit("excluded_points") != nullptr);

  auto stat = small_ergodicity();
  stat.model.initial.kind = "stationary";
  const auto s = run_ergodicity(stat);
  CHECK(s.fit("bound_majorizes")->verdict == Verdict::pass);
  CHECK(s.fit("decay_rate")->verdict == Verdict::inconclusive);
}

TEST_CASE("ergodicity: larger kappa gives a faster fitted rate") {
  auto slow = small_ergodicity();
  auto fast = small_ergodicity();
  fast.model.coefficients = {4.0, 0.5};
  fast.step = 0.005;
  fast.t_grid = {0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0, 1.25, 1.5, 1.75, 2.0};
  const double rs = run_ergodicity(slow).fit("decay_rate")->rate;
  const double rf = run_ergodicity(fast).fit("decay_rate")->rate;
  CHECK(rf > rs);
}

TEST_CASE("ergodicity: self-distance mode runs") {
  auto c = small_ergodicity();
  c.mode = "self";
  const auto r = run_ergodicity(c);
  CHECK(r.fit("decay_rate") != nullptr);
  CHECK(r.row("w2_pooled", 4.0) == nullptr);
}

TEST_CASE("euler_sweep: noiseless model has squared-metric slope 2") {
  auto c = default_config("euler_sweep");
  c.model.sigma = 0.0;
  c.model.initial = {"gaussian", 0.0, 1.0, 1.0};
  c.n = 50;
  c.replicas = 2;
  c.bootstrap_resamples = 20;
  const auto r = run_euler_sweep(c);
  const auto* f = r.fit("loglog_slope");
  CHECK(f->rate >= 1.7);
  CHECK(f->rate <= 2.3);
  CHECK(f->verdict == Verdict::pass);
}

TEST_CASE("euler_sweep: the reference step itself has zero gap") {
  auto c = default_config("euler_sweep");
  c.n = 20;
  c.replicas = 2;
  c.reference_refinement = 1;
  c.bootstrap_resamples = 10;
  const auto r = run_euler_sweep(c);
  CHECK(r.row("max_t_msq_gap", 0.025)->estimate == 0.0);
  CHECK(r.fit("loglog_slope")->verdict == Verdict::inconclusive);
}

TEST_CASE("lln_sweep: pooled error shrinks with n and a(n) overlay matches") {
  auto c = default_config("lln_sweep");
  c.n_list = {100, 200, 400, 800};
  c.replicas = 6;
  c.step = 0.01;
  c.t_grid = {0.0, 1.0};
  c.bootstrap_resamples = 30;
  const auto r = run_lln_sweep(c);
  CHECK(r.fit("pooled_slope")->rate < -0.2);
  for (std::size_t n : c.n_list) CHECK(r.row("a_n", double(n))->estimate == lln_rate_a(n, 1));
}

TEST_CASE("interchange: drops degenerate axes") {
  auto c = default_config("interchange");
  c.n_list = {200};
  c.h_list = {1.0 / 16};
  c.t_grid = {0.5, 1.0, 2.0, 4.0};
  c.replicas = 3;
  c.bootstrap_resamples = 10;
  const auto r = run_interchange(c);
  CHECK(r.fit("alpha_n") == nullptr);
  CHECK(r.fit("beta_h") == nullptr);
  REQUIRE(r.fit("gamma_t") != nullptr);
  CHECK(r.fit("gamma_t")->rate > 0.0);
}

TEST_CASE("quenched_vs_annealed: deterministic edges make policies coincide") {
  auto c = default_config("quenched_vs_annealed");
  c.model.edge_mode = EdgeMode::deterministic;
  c.n = 60;
  c.replicas = 2;
  c.families = 2;
  c.burn_in = 1.0;
  c.bootstrap_resamples = 10;
  const auto r = run_quenched_vs_annealed(c);
  CHECK(r.fit("quenched_pooled")->rate == r.fit("annealed")->rate);
  CHECK(r.fit("quenched_family_0")->verdict == Verdict::pass);
}

TEST_CASE("concentration: no violations on a small sweep") {
  auto c = default_config("concentration");
  c.n_list = {1, 5, 30, 100};
  c.replicas = 300;
  c.wp_n = {10, 100};
  c.wp_replicas = 20;
  const auto r = run_concentration(c);
  CHECK(r.fit("violations")->verdict == Verdict::pass);
  CHECK(r.fit("wp_fitted_C")->rate > 0.0);
}

TEST_CASE("outputs are byte-identical across runs and thread counts") {
  auto c = small_ergodicity();
  c.n = 100;
  c.replicas = 3;
  set_num_threads(1);
  const auto a = results_csv(run_ergodicity(c));
  set_num_threads(4);
  const auto b = results_csv(run_ergodicity(c));
  set_num_threads(0);
  CHECK(a == b);
  CHECK(a.rfind("sweep_var,value,metric,estimate,se,replicas\n", 0) == 0);
}

TEST_CASE("write_outputs and trajectory files") {
  const auto dir = std::filesystem::temp_directory_path() / "gmfs_unit_outputs";
  std::filesystem::remove_all(dir);
  auto c = default_config("concentration");
  c.n_list = {1, 2};
  c.replicas = 10;
  c.wp_n.clear();
  const auto r = run_concentration(c);
  write_outputs(r, c, dir.string());
  for (const char* f : {"results.csv", "fit.csv", "meta.json"}) CHECK(std::filesystem::exists(dir / f));

  const auto edges = std::make_shared<const EdgeWeights>(sample_edges(Graphon::constant(1.0), 2, EdgeMode::deterministic));
  const auto s0 = make_state(edges, 1, InitialLaw::point(1.0), 1, 0);
  const auto snaps = integrate(s0, DriftSpec::mean_reverting(2.0, 0.5), DiffusionSpec::scalar(0.0),
                               IntegratorConfig::fresh(0.01, 0.01, {0.0, 0.01}, 1));
  std::ostringstream out;
  write_trajectory_csv(out, snaps, 0.01, 1, 77);
  const std::string text = out.str();
  CHECK(text.rfind("# n=2 d=1 h=", 0) == 0);
  CHECK(text.find("t,i,x0\n") != std::string::npos);
  CHECK(text.find("\n0.01,1,") != std::string::npos);
  CHECK(text.find("\n0,0,1\n") != std::string::npos);
  std::filesystem::remove_all(dir);
}
