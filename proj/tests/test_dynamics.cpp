#include <doctest.h>

#include <cmath>

#include "gmfs/dynamics.hpp"
#include "gmfs/errors.hpp"

using namespace gmfs;

TEST_CASE("mean_reverting preset constants and certificate") {
  const auto s = DriftSpec::mean_reverting(2.0, 0.5);
  CHECK(s.c0() == 2.5);
  CHECK(s.k_b() == 0.5);
  CHECK(s.kappa() == 1.5);
  const auto rep = certify_dissipativity(s, 2000, 10.0, 3);
  CHECK(rep.certified);
  CHECK_FALSE(rep.counterexample.has_value());
  CHECK(rep.worst_margin >= -1e-9);
}

TEST_CASE("mean_reverting never yields a counterexample for c1 > c2 > 0") {
  for (double c1 : {0.6, 1.0, 3.0, 10.0})
    for (double c2 : {0.1, 0.5}) {
      if (!(c1 > c2)) continue;
      const auto rep = certify_dissipativity(DriftSpec::mean_reverting(c1, c2), 500, 5.0, 17);
      CHECK(rep.certified);
    }
}

TEST_CASE("expansive drift is reported") {
  const auto s = DriftSpec::custom(
      1, [](std::span<const double> x, std::span<double> out) { out[0] = x[0]; },
      [](std::span<const double>, std::span<const double>, std::span<double> out) { out[0] = 0.0; }, 1.0, 0.0, 1.0);
  const auto rep = certify_dissipativity(s, 200, 1.0, 1);
  CHECK_FALSE(rep.certified);
  CHECK(rep.counterexample.has_value());
}

TEST_CASE("linear preset certificate and declared constants") {
  const auto s = DriftSpec::linear(0.0, 2.0, 0.0, 0.5, 0.5);
  CHECK(s.k_b() == 0.5);
  CHECK(s.c0() == 2.0);
  CHECK(s.kappa() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(certify_dissipativity(s, 1000, 5.0, 2).certified);
  CHECK_THROWS_AS(DriftSpec::linear(0.0, 1.0, 0.0, 0.5, 0.1), DomainError);
  CHECK_THROWS_AS(DriftSpec::mean_reverting(0.5, 1.0), DomainError);
}

TEST_CASE("kappa equals c0 - 2 Kb") {
  for (double c2 : {1.0, 2.0, 3.5})
    for (double c4 : {-0.3, 0.2}) {
      const auto s = DriftSpec::linear(0.1, c2, 0.2, c4, 0.1);
      CHECK(s.kappa() == s.c0() - 2.0 * s.k_b());
    }
}

TEST_CASE("ergodicity_bound") {
  const auto s = DriftSpec::mean_reverting(2.0, 0.5);
  const auto rc = RateConstants::for_spec(s, 1.0, 1.0);
  CHECK(ergodicity_bound(rc, 2.5, 0.5, 0.0) == doctest::Approx(std::sqrt(4.0 * 2.0 / 1.5)).epsilon(1e-15));
  CHECK(ergodicity_bound(rc, 2.5, 0.5, 0.0) == doctest::Approx(2.3094010767585).epsilon(1e-12));
  CHECK(ergodicity_bound(rc, 2.5, 0.5, 2.0) / ergodicity_bound(rc, 2.5, 0.5, 0.0) ==
        doctest::Approx(std::exp(-1.5)).epsilon(1e-14));
  CHECK(ergodicity_bound(rc, 2.5, 0.5, 200.0) < 1e-60);
  double prev = ergodicity_bound(rc, 2.5, 0.5, 0.0);
  for (double t = 0.5; t < 10; t += 0.5) {
    const double b = ergodicity_bound(rc, 2.5, 0.5, t);
    CHECK(b < prev);
    prev = b;
  }
  RateConstants bad = rc;
  bad.kappa = 0.0;
  CHECK_THROWS_AS(ergodicity_bound(bad, 2.5, 0.5, 1.0), DomainError);
  CHECK(finite_ergodicity_bound(rc, 1.0) == doctest::Approx(2.0 * std::exp(-1.5)));
}

TEST_CASE("lln_rate_a") {
  CHECK(lln_rate_a(1, 1) == 2.0);
  CHECK(lln_rate_a(1, 5) == 2.0);
  CHECK(lln_rate_a(4096, 1) == doctest::Approx(0.500244140625).epsilon(1e-14));
  CHECK(lln_rate_a(1000000, 2) == doctest::Approx(0.001 + std::pow(10.0, -0.5)).epsilon(1e-14));
  CHECK(lln_rate_a(1000000, 2) == doctest::Approx(0.317227766).epsilon(1e-9));
  for (std::size_t d = 1; d <= 4; ++d)
    for (std::size_t n = 1; n < 5000; n = n * 3 + 1) {
      CHECK(lln_rate_a(n + 1, d) < lln_rate_a(n, d));
      if (n > 1) CHECK(lln_rate_a(n, d + 1) > lln_rate_a(n, d));
    }
}

TEST_CASE("default stability cap") {
  const auto s = DriftSpec::mean_reverting(2.0, 0.5);
  CHECK(default_stability_cap(s) == doctest::Approx(0.1 / (2.5 + 1.0 + 1.0)));
}

TEST_CASE("diffusion spec") {
  const auto d = DiffusionSpec::scalar(0.7, 2);
  CHECK(d.dimension() == 2);
  CHECK(d.scalar_value() == 0.7);
  CHECK_FALSE(DiffusionSpec(Matrix{{1.0, 0.1}, {0.0, 1.0}}).scalar_value().has_value());
}
