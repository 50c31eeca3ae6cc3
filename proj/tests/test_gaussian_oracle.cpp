#include <doctest.h>

#include <cmath>

#include "gmfs/errors.hpp"
#include "gmfs/fitting.hpp"
#include "gmfs/gaussian_oracle.hpp"

using namespace gmfs;

namespace {

LinearModel model(double c1, double c2, double c3, double c4, double c5, double sigma = 1.0) {
  LinearModel m;
  m.c = {c1, c2, c3, c4, c5};
  m.sigma = sigma;
  return m;
}

const Graphon& uv() {
  static const Graphon g = Graphon::closed_form([](double u, double v) { return u * v; }, "uv");
  return g;
}

}  // namespace

TEST_CASE("integrate_moments reproduces the scalar OU closed form") {
  const auto lm = model(0, 1.5, 0, 0, 0, 1.0);
  MomentField init = MomentField::from_law(8, [](double) { return 1.0; }, [](double) { return 0.0; });
  const std::vector<double> times{0.5, 1.0, 3.0, 20.0};
  const auto fields = integrate_moments(Graphon::constant(1.0), lm, init, times, 0.002);
  for (std::size_t s = 0; s < times.size(); ++s) {
    const double t = times[s];
    const double m = std::exp(-1.5 * t);
    const double var = (1.0 - std::exp(-3.0 * t)) / 3.0;
    CHECK(fields[s].t == doctest::Approx(t));
    for (std::size_t k = 0; k < 8; ++k) {
      CHECK(fields[s].m[k] == doctest::Approx(m).epsilon(1e-9));
      CHECK(fields[s].M[k] == doctest::Approx(var + m * m).epsilon(1e-9));
    }
  }
}

TEST_CASE("integrate_moments keeps the stationary field fixed") {
  const auto lm = model(0, 2.0, 0, 0, 0, 1.0);
  MomentField init = MomentField::from_law(4, [](double) { return 0.0; }, [](double) { return 0.25; });
  const auto fields = integrate_moments(Graphon::constant(0.3), lm, init, {1.0, 5.0}, 0.02);
  for (const auto& f : fields)
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(f.m[k] == 0.0);
      CHECK(f.M[k] == doctest::Approx(0.25).epsilon(1e-14));
    }
}

TEST_CASE("integrate_moments enforces the step bound") {
  const auto lm = model(0, 2.0, 0, 0.5, 0.3);
  const auto init = MomentField::from_law(4, [](double) { return 0.0; }, [](double) { return 1.0; });
  CHECK_THROWS_AS(integrate_moments(Graphon::constant(1.0), lm, init, {1.0}, 0.1), DomainError);
}

TEST_CASE("moment grid self-convergence for Lipschitz G") {
  const auto lm = model(0.5, 2.0, 0.2, 0.5, 0.3);
  auto at = [&](std::size_t k) {
    const auto init = MomentField::from_law(k, [](double u) { return u; }, [](double) { return 0.5; });
    return integrate_moments(uv(), lm, init, {2.0}, 0.01)[0];
  };
  const auto a = at(64), b = at(128);
  double diff = 0.0;
  for (double u = 0.01; u < 1.0; u += 0.01) diff = std::max(diff, std::abs(a.mean_at(u) - b.mean_at(u)));
  CHECK(diff <= 1e-4);
}

TEST_CASE("solve_stationary examples") {
  SUBCASE("no interaction") {
    const auto r = solve_stationary(uv(), model(1, 2, 0, 0, 0), 16);
    for (double m : r.field.m) CHECK(m == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("centred closed form with G = 1") {
    const auto r = solve_stationary(Graphon::constant(1.0), model(0, 2, 0, 0.5, 0.3), 32);
    for (std::size_t k = 0; k < 32; ++k) {
      CHECK(std::abs(r.field.m[k]) <= 1e-14);
      CHECK(std::abs(r.field.M[k] - 1.0 / 3.0) <= 1e-8);
    }
    CHECK(averaged_law(r.field).second_moment() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // cross-check by running the ODEs to T = 40
    const auto init = MomentField::from_law(32, [](double) { return 1.0; }, [](double) { return 1.0; });
    const auto late = integrate_moments(Graphon::constant(1.0), model(0, 2, 0, 0.5, 0.3), init, {40.0}, 0.01)[0];
    for (std::size_t k = 0; k < 32; ++k) CHECK(late.M[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  }
  SUBCASE("centred closed form with a label-dependent graphon") {
    const std::size_t K = 64;
    const auto r = solve_stationary(uv(), model(0, 2, 0, 0.5, 0.3, 1.3), K);
    for (std::size_t k = 0; k < K; ++k) {
      const double u = r.field.labels[k];
      // midpoint quadrature of int G(u, v) dv = u/2 is exact for a linear integrand
      const double expect = 1.69 / (2.0 * (2.0 - 0.5 * u / 2.0));
      CHECK(r.field.m[k] == 0.0);
      CHECK(r.field.M[k] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("two-block averaged law") {
    // row integrals 1/2 and 0: variances 1/(2(2 - 1/4)) and 1/4
    const Graphon h = Graphon::step(StepKernel({0.0, 0.5, 1.0}, Matrix{{1.0, 0.0}, {0.0, 0.0}}));
    const auto r = solve_stationary(h, model(0, 2, 0, 0.5, 0.0), 2);
    CHECK(r.field.variance(0) == doctest::Approx(1.0 / 3.5).epsilon(1e-14));
    CHECK(r.field.variance(1) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(averaged_law(r.field).second_moment() == doctest::Approx((1.0 / 3.5 + 0.25) / 2.0).epsilon(1e-14));
  }
}

TEST_CASE("averaged law of a full-row/empty-row field") {
  // component variances 1/3 and 1/4 as in a kernel with row integrals 1 and 0
  MomentField f;
  f.labels = {0.25, 0.75};
  f.m = {0.0, 0.0};
  f.M = {1.0 / 3.0, 0.25};
  const auto law = averaged_law(f);
  CHECK(law.second_moment() == doctest::Approx((1.0 / 3.0 + 0.25) / 2.0).epsilon(1e-15));
  CHECK(law.second_moment() == doctest::Approx(0.2916666666666667).epsilon(1e-14));
  MomentField flat;
  flat.labels = MomentField::midpoint_grid(5);
  flat.m.assign(5, 0.2);
  flat.M.assign(5, 0.5);
  CHECK(averaged_law(flat).components().size() == 1);
}

TEST_CASE("stationary iteration contracts geometrically") {
  const auto lm = model(1.0, 2.0, 0.4, 0.5, 0.3);
  const auto r = solve_stationary(uv(), lm, 32);
  const double bound = (0.5 + 0.3) / 2.0 + 1e-9;
  for (std::size_t k = 1; k < r.increments.size(); ++k) {
    if (r.increments[k - 1] < 1e-12) break;
    CHECK(r.increments[k] / r.increments[k - 1] <= bound);
  }
}

TEST_CASE("stationary grid self-convergence order") {
  const auto lm = model(1.0, 2.0, 0.4, 0.5, 0.3);
  const Graphon g = Graphon::closed_form([](double u, double v) { return 0.5 + 0.4 * std::sin(u + v) * std::cos(u * v) - 0.2 * u * v; }, "smooth");
  const auto f1 = solve_stationary(g, lm, 16).field;
  const auto f2 = solve_stationary(g, lm, 32).field;
  const auto f3 = solve_stationary(g, lm, 64).field;
  auto gap = [](const MomentField& a, const MomentField& b) {
    double d = 0.0;
    for (double u = 0.1; u <= 0.9; u += 0.05) d = std::max(d, std::abs(a.mean_at(u) - b.mean_at(u)));
    return d;
  };
  const double order = std::log2(gap(f1, f2) / gap(f2, f3));
  CHECK(order >= 1.5);
}

TEST_CASE("ODE flow converges to the stationary field at the linear rate") {
  const auto lm = model(1.0, 2.0, 0.4, 0.5, 0.3);
  const auto stat = solve_stationary(uv(), lm, 32).field;
  const auto init = MomentField::from_law(32, [](double u) { return 3.0 - u; }, [](double) { return 1.0; });
  std::vector<double> times{1, 2, 3, 4, 5, 6};
  const auto path = integrate_moments(uv(), lm, init, times, 0.01);
  std::vector<double> logs;
  for (const auto& f : path) {
    double d = 0.0;
    for (std::size_t k = 0; k < 32; ++k) d = std::max(d, std::abs(f.m[k] - stat.m[k]));
    logs.push_back(std::log(d));
    CHECK(f.M[0] >= f.m[0] * f.m[0] - 1e-9);
  }
  const double rate = -fit::ols(times, logs).slope;
  CHECK(rate >= 0.8 * lm.contraction_margin());
}

TEST_CASE("LinearModel capability checks") {
  CHECK_THROWS_AS(LinearModel::from(DriftSpec::linear(0, 2, 0, 0.5, 0.3, 2), DiffusionSpec::scalar(1.0, 2)),
                  CapabilityError);
  const auto mr = LinearModel::from(DriftSpec::mean_reverting(2.0, 0.5), DiffusionSpec::scalar(1.0));
  CHECK(mr.c.c2 == 2.5);
  CHECK(mr.c.c4 == 0.5);
  CHECK(mr.c.c5 == 0.5);
}

TEST_CASE("label continuity") {
  const auto lm = model(0.0, 2.0, 0.0, 0.5, 0.3);
  const auto flat = solve_stationary(Graphon::constant(0.6), lm, 16).field;
  CHECK(label_continuity_check(flat, Graphon::constant(0.6)).max_ratio == doctest::Approx(0.0).epsilon(1e-12));
  const auto smooth = solve_stationary(uv(), lm, 64).field;
  const auto rep = label_continuity_check(smooth, uv());
  CHECK(rep.flagged.empty());
  CHECK(rep.max_ratio < 1.0);
  const Graphon step = Graphon::step(StepKernel({0.0, 0.5, 1.0}, Matrix{{1.0, 0.0}, {0.0, 0.0}}));
  const auto jumpy = solve_stationary(step, lm, 16).field;
  const auto rj = label_continuity_check(jumpy, step);
  CHECK(rj.flagged.size() == 1);
  CHECK(rj.max_ratio_all > rj.max_ratio);
}
