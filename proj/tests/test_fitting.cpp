#include <doctest.h>

#include <cmath>

#include "gmfs/errors.hpp"
#include "gmfs/fitting.hpp"
#include "gmfs/rng.hpp"

using namespace gmfs;

TEST_CASE("ols recovers an exact line") {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto l = fit::ols(x, y);
  CHECK(l.slope == doctest::Approx(2.0));
  CHECK(l.intercept == doctest::Approx(1.0));
  CHECK(l.rms_residual == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(fit::ols(std::vector<double>{1, 1}, std::vector<double>{1, 2}), DomainError);
}

TEST_CASE("log-log slope of a power law") {
  std::vector<double> lx, ly;
  for (double h : {0.2, 0.1, 0.05, 0.025}) {
    lx.push_back(std::log(h));
    ly.push_back(std::log(3.0 * h * h));
  }
  CHECK(fit::ols(lx, ly).slope == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("nnls agrees with brute force and clamps negative directions") {
  Matrix a(6, 2);
  std::vector<double> y(6);
  for (std::size_t i = 0; i < 6; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = static_cast<double>(i);
    y[i] = 5.0 - 0.5 * static_cast<double>(i);  // unconstrained slope negative
  }
  const auto r = fit::nnls(a, y);
  CHECK(r.coefficients[1] == 0.0);
  CHECK(r.coefficients[0] == doctest::Approx(3.75));
  // grid brute force over the feasible quadrant
  double best = INFINITY;
  for (double c0 = 0; c0 <= 6; c0 += 0.01)
    for (double c1 = 0; c1 <= 1; c1 += 0.01) {
      double s = 0;
      for (std::size_t i = 0; i < 6; ++i) s += std::pow(c0 + c1 * i - y[i], 2);
      best = std::min(best, s);
    }
  CHECK(r.rms_residual * r.rms_residual * 6.0 <= best + 1e-9);
}

TEST_CASE("nnls recovers a nonnegative three-term model") {
  Matrix a(12, 3);
  std::vector<double> y(12);
  for (std::size_t i = 0; i < 12; ++i) {
    a(i, 0) = 1.0 / std::sqrt(10.0 + i);
    a(i, 1) = std::sqrt(0.01 * (1 + i % 3));
    a(i, 2) = std::exp(-0.5 * i);
    y[i] = 2.0 * a(i, 0) + 0.5 * a(i, 1) + 1.5 * a(i, 2);
  }
  const auto r = fit::nnls(a, y);
  CHECK(r.coefficients[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(r.coefficients[1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.coefficients[2] == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(r.max_abs_residual < 1e-12);
}

TEST_CASE("bootstrap interval covers the mean and is reproducible") {
  std::vector<double> v(40);
  for (std::size_t i = 0; i < 40; ++i) v[i] = 1.0 + rng::normal(7, i);
  auto stat = [&](const std::vector<std::size_t>& pick) -> std::optional<double> {
    double s = 0;
    for (auto r : pick) s += v[r];
    return s / pick.size();
  };
  const auto a = fit::bootstrap(40, 400, 3, stat);
  const auto b = fit::bootstrap(40, 400, 3, stat);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  const double m = fit::mean(v);
  CHECK(a.lo < m);
  CHECK(a.hi > m);
  // width close to 2 * 1.96 * SE
  CHECK((a.hi - a.lo) == doctest::Approx(3.92 * fit::standard_error(v)).epsilon(0.25));
}

TEST_CASE("jackknife of the mean equals the standard error") {
  std::vector<double> v{1.0, 4.0, 2.0, 8.0, 5.0};
  std::vector<double> loo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < v.size(); ++j)
      if (j != i) s += v[j];
    loo.push_back(s / 4.0);
  }
  CHECK(fit::jackknife_se(loo) == doctest::Approx(fit::standard_error(v)).epsilon(1e-14));
}
