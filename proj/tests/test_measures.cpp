#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmfs/assignment.hpp"
#include "gmfs/errors.hpp"
#include "gmfs/measures.hpp"
#include "gmfs/rng.hpp"

using namespace gmfs;

namespace {

// W2 over all permutations: equal-weight equal-count couplings attain the
// optimum at a vertex of the Birkhoff polytope.
double w2_by_enumeration(const std::vector<double>& a, const std::vector<double>& b, std::size_t d) {
  const std::size_t m = a.size() / d;
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = a[i * d + k] - b[perm[i] * d + k];
        c += diff * diff;
      }
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(m));
}

std::vector<double> replicate(const std::vector<double>& a, std::size_t times) {
  std::vector<double> out;
  for (double x : a)
    for (std::size_t k = 0; k < times; ++k) out.push_back(x);
  return out;
}

double std_normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double binom_pmf(std::size_t n, std::size_t k, double p) {
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                  k * std::log(p) + (n - k) * std::log1p(-p));
}

std::vector<double> random_atoms(std::uint64_t key, std::uint64_t inst, std::size_t count) {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = rng::normal(key, inst, i);
  return v;
}

}  // namespace

TEST_CASE("w2_empirical_1d examples") {
  const EmpiricalMeasure a({0.5, -1.0, 2.0});
  CHECK(w2_empirical_1d(a, a) == 0.0);
  CHECK(w2_empirical_1d(EmpiricalMeasure({1.0, 3.0}), EmpiricalMeasure({0.0, 2.0})) == doctest::Approx(1.0));
  const double v = w2_empirical_1d(EmpiricalMeasure({0.0, 0.0, 3.0}), EmpiricalMeasure({1.0, 1.0, 1.0}));
  CHECK(v == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(v == doctest::Approx(w2_by_enumeration({0, 0, 3}, {1, 1, 1}, 1)).epsilon(1e-14));
  CHECK_THROWS_AS(w2_empirical_1d(EmpiricalMeasure({0, 0}, 2), EmpiricalMeasure({0, 0}, 2)), CapabilityError);
}

TEST_CASE("w2_empirical_1d with unequal counts matches the replicated enumeration") {
  for (std::uint64_t inst = 0; inst < 30; ++inst) {
    const std::size_t ma = 2 + inst % 2, mb = 3 - inst % 2 + (inst % 3 == 0 ? 0 : 0);
    const auto a = random_atoms(21, inst, ma);
    const auto b = random_atoms(22, inst, mb);
    const std::size_t l = std::lcm(ma, mb);
    const double oracle = w2_by_enumeration(replicate(a, l / ma), replicate(b, l / mb), 1);
    CHECK(w2_empirical_1d(EmpiricalMeasure(a), EmpiricalMeasure(b)) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("w2_assignment examples and LP oracle") {
  const EmpiricalMeasure a({0.0, 0.0, 1.0, 1.0}, 2), b({1.0, 1.0, 0.0, 0.0}, 2);
  CHECK(w2_assignment(a, b) == doctest::Approx(0.0).epsilon(1e-15));
  const EmpiricalMeasure c({3.0, 1.0, 2.0}), c2({1.0, 2.0, 3.0});
  CHECK(w2_assignment(c, c2) == 0.0);
  for (std::uint64_t inst = 0; inst < 40; ++inst) {
    const std::size_t m = 2 + inst % 5, d = 1 + inst % 3;
    const auto x = random_atoms(31, inst, m * d), y = random_atoms(32, inst, m * d);
    CHECK(w2_assignment(EmpiricalMeasure(x, d), EmpiricalMeasure(y, d)) ==
          doctest::Approx(w2_by_enumeration(x, y, d)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(w2_assignment(EmpiricalMeasure(std::vector<double>(10, 0.0)), EmpiricalMeasure(std::vector<double>(10, 0.0)), 5),
                  CapabilityError);
  CHECK_THROWS(w2_assignment(EmpiricalMeasure({0.0, 1.0}), EmpiricalMeasure({0.0})));
}

TEST_CASE("min_cost_assignment on a hand instance") {
  const Matrix cost{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
  const auto res = min_cost_assignment(cost);
  CHECK(res.cost == 5.0);
  CHECK(res.column_of_row == std::vector<std::size_t>{1, 0, 2});
}

TEST_CASE("metric axioms and equivalence on random 1D instances") {
  for (std::uint64_t inst = 0; inst < 60; ++inst) {
    const std::size_t m = 1 + inst % 12;
    const EmpiricalMeasure a(random_atoms(41, inst, m)), b(random_atoms(42, inst, m)), c(random_atoms(43, inst, m));
    const double ab = w2_empirical_1d(a, b), ba = w2_empirical_1d(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-14));
    CHECK(ab == doctest::Approx(w2_assignment(a, b)).epsilon(1e-9));
    CHECK(ab <= w2_empirical_1d(a, c) + w2_empirical_1d(c, b) + 1e-9);
    CHECK(ab >= w1_empirical_1d(a, b) - 1e-12);
  }
}

TEST_CASE("translation equivariance") {
  const auto x = random_atoms(51, 0, 9), y = random_atoms(52, 0, 9);
  std::vector<double> xs = x, ys = y;
  for (double& v : xs) v += 2.5;
  for (double& v : ys) v += 2.5;
  CHECK(w2_empirical_1d(EmpiricalMeasure(xs), EmpiricalMeasure(ys)) ==
        doctest::Approx(w2_empirical_1d(EmpiricalMeasure(x), EmpiricalMeasure(y))).epsilon(1e-12));
  CHECK(w2_empirical_1d(EmpiricalMeasure({1.0}), EmpiricalMeasure({-2.0})) == 3.0);
}

TEST_CASE("joint W2 squared dominates the sum of marginal W2 squared") {
  for (std::uint64_t inst = 0; inst < 20; ++inst) {
    const std::size_t m = 3 + inst % 3;
    const auto x = random_atoms(61, inst, 2 * m), y = random_atoms(62, inst, 2 * m);
    std::vector<double> x1, x2, y1, y2;
    for (std::size_t i = 0; i < m; ++i) {
      x1.push_back(x[2 * i]);
      x2.push_back(x[2 * i + 1]);
      y1.push_back(y[2 * i]);
      y2.push_back(y[2 * i + 1]);
    }
    const double joint = w2_assignment(EmpiricalMeasure(x, 2), EmpiricalMeasure(y, 2));
    const double m1 = w2_empirical_1d(EmpiricalMeasure(x1), EmpiricalMeasure(y1));
    const double m2 = w2_empirical_1d(EmpiricalMeasure(x2), EmpiricalMeasure(y2));
    CHECK(joint * joint >= m1 * m1 + m2 * m2 - 1e-12);
  }
}

TEST_CASE("w1 is the area between CDFs") {
  const EmpiricalMeasure a({0.0, 1.0}), b({0.5, 3.0});
  // F_a - F_b: 1/2 on [0,0.5), 0 on [0.5,1), -1/2 on [1,3)
  CHECK(w1_empirical_1d(a, b) == doctest::Approx(0.25 + 1.0).epsilon(1e-14));
}

TEST_CASE("w2_gaussian_1d") {
  CHECK(w2_gaussian_1d(1, 2, 0, 2) == 1.0);
  CHECK(w2_gaussian_1d(0, 1, 0, 3) == 2.0);
  CHECK(w2_gaussian_1d(3, 1, 0, 5) == 5.0);
  // quadrature cross-check
  const std::size_t g = 20000;
  double acc = 0.0;
  for (std::size_t j = 0; j < g; ++j) {
    const double z = std_normal_quantile((j + 0.5) / g);
    const double d = (3.0 + z) - 5.0 * z;
    acc += d * d;
  }
  CHECK(std::sqrt(acc / g) == doctest::Approx(5.0).epsilon(2e-3));
}

TEST_CASE("mixture law basics") {
  const auto n = MixtureLaw::gaussian(1.0, 4.0);
  CHECK(n.cdf(1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(n.quantile(0.5) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(n.quantile(0.975) == doctest::Approx(1.0 + 2.0 * 1.959963984540054).epsilon(1e-9));
  CHECK(n.mean() == 1.0);
  CHECK(n.second_moment() == 5.0);
  const auto pm = MixtureLaw::point_mass(2.0);
  CHECK(pm.quantile(0.3) == 2.0);
  CHECK_THROWS(MixtureLaw({{0.5, {0.0}, {1.0}}, {0.4, {0.0}, {1.0}}}));
  CHECK_THROWS(MixtureLaw({{1.0, {0.0}, {-1.0}}}));
}

TEST_CASE("w2_empirical_vs_mixture_1d") {
  const std::size_t grid = 1024;
  const auto law = MixtureLaw::gaussian(0.0, 1.0);
  std::vector<double> q(grid);
  for (std::size_t j = 0; j < grid; ++j) q[j] = std_normal_quantile((j + 0.5) / grid);
  CHECK(w2_empirical_vs_mixture_1d(EmpiricalMeasure(q), law, grid).value < 2.0 / grid);

  CHECK(w2_empirical_vs_mixture_1d(EmpiricalMeasure({1.5, 1.5, 1.5}), MixtureLaw::point_mass(1.5)).value ==
        doctest::Approx(0.0).epsilon(1e-12));

  // {-1, 1} against N(0,1) by high-resolution quadrature
  const std::size_t fine = 400000;
  double acc = 0.0;
  for (std::size_t j = 0; j < fine; ++j) {
    const double p = (j + 0.5) / fine;
    const double d = (p < 0.5 ? -1.0 : 1.0) - std_normal_quantile(p);
    acc += d * d;
  }
  const double oracle = std::sqrt(acc / fine);
  const auto res = w2_empirical_vs_mixture_1d(EmpiricalMeasure({-1.0, 1.0}), law, 8192);
  CHECK(res.value == doctest::Approx(oracle).epsilon(1e-4));
  CHECK(res.refinement_error < 1e-3);
  CHECK(res.grid_size == 8192);
  // exact value: E Z^2 - 2 E|Z| + 1 = 2 - 2 sqrt(2/pi)
  CHECK(w2_sorted_vs_cells(std::vector<double>{-1.0, 1.0}, quantile_cells(law, 2)) ==
        doctest::Approx(std::sqrt(2.0 - 2.0 * std::sqrt(2.0 / M_PI))).epsilon(1e-9));
}

TEST_CASE("quantile cells agree with the quadrature estimator on mixtures") {
  const MixtureLaw law({{0.3, {-1.0}, {0.25}}, {0.5, {0.5}, {1.0}}, {0.2, {2.0}, {0.0}}});
  std::vector<double> x = random_atoms(71, 0, 500);
  for (double& v : x) v = 0.2 + 1.1 * v;
  std::sort(x.begin(), x.end());
  const double exact = w2_sorted_vs_cells(x, quantile_cells(law, x.size()));
  const auto quad = w2_empirical_vs_mixture_1d(EmpiricalMeasure(x), law, 1 << 15);
  CHECK(exact == doctest::Approx(quad.value).epsilon(1e-3));
  const auto cells = quantile_cells(law, 64);
  double mean = 0.0;
  for (double v : cells.mean) mean += v / 64.0;
  CHECK(mean == doctest::Approx(law.mean()).epsilon(1e-9));
  CHECK(cells.second_moment == doctest::Approx(law.second_moment()).epsilon(1e-12));
}

TEST_CASE("wp_sorted_vs_table") {
  const auto law = MixtureLaw::gaussian(0.0, 1.0);
  const auto table = QuantileTable::from_mixture(law, 256);
  std::vector<double> q(table.values().begin(), table.values().end());
  CHECK(wp_sorted_vs_table(q, table, 2.0) == doctest::Approx(0.0).epsilon(1e-14));
  std::vector<double> shifted = q;
  for (double& v : shifted) v += 0.5;
  CHECK(wp_sorted_vs_table(shifted, table, 3.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("moments") {
  const auto m = moments(EmpiricalMeasure({-1.0, 1.0}), 2);
  CHECK(m(0, 0) == 0.0);
  CHECK(m(1, 0) == 1.0);
  CHECK(moments(EmpiricalMeasure({2.0}), 4)(3, 0) == 16.0);
  const auto z = random_atoms(81, 0, 100000);
  CHECK(std::abs(moments(EmpiricalMeasure(z), 4)(3, 0) - 3.0) < 0.15);
  CHECK_THROWS(moments(EmpiricalMeasure({1.0}), 5));
}

TEST_CASE("pooled empirical measures") {
  const std::vector<EmpiricalMeasure> parts{EmpiricalMeasure({1.0, 2.0}), EmpiricalMeasure({3.0})};
  const auto p = EmpiricalMeasure::pooled(parts);
  CHECK(p.size() == 3);
  CHECK(p.sorted_1d() == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("exact concentration lhs matches the binomial expectation") {
  for (std::size_t n : {1, 2, 5, 13, 30})
    for (double p : {0.05, 0.3, 0.5, 0.9}) {
      double oracle = 0.0;
      for (std::size_t k = 0; k <= n; ++k) oracle += binom_pmf(n, k, p) * std::abs(double(k) / n - p);
      const std::vector<double> probs(n, p);
      CHECK(exact_concentration_lhs(probs) == doctest::Approx(oracle).epsilon(1e-12));
      CHECK(exact_concentration_lhs(probs) <= concentration_bound(p, n) + 1e-15);
    }
  CHECK(exact_concentration_lhs(std::vector<double>{0.3}) == doctest::Approx(2 * 0.3 * 0.7).epsilon(1e-15));
}

TEST_CASE("concentration_check") {
  SUBCASE("point masses give zero deviation") {
    std::vector<ScalarLaw> laws(20, ScalarLaw::point(0.3));
    const auto rep = concentration_check(laws, {{0.0, 1.0}, {1.0, 2.0}}, 50, 1);
    CHECK(rep.ok);
    for (const auto& r : rep.rows) CHECK(r.estimate == 0.0);
  }
  SUBCASE("homogeneous Bernoulli-position laws") {
    std::vector<ScalarLaw> laws(25, ScalarLaw::discrete({0.0, 1.0}, {0.7, 0.3}));
    const auto rep = concentration_check(laws, {{0.5, 1.5}}, 4000, 2);
    CHECK(rep.ok);
    CHECK(rep.rows[0].nu_bar == doctest::Approx(0.3));
    double oracle = 0.0;
    for (std::size_t k = 0; k <= 25; ++k) oracle += binom_pmf(25, k, 0.3) * std::abs(k / 25.0 - 0.3);
    CHECK(rep.rows[0].exact == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(std::abs(rep.rows[0].estimate - oracle) < 6.0 * rep.rows[0].se + 1e-12);
  }
  SUBCASE("n = 1 matches 2p(1-p)") {
    const std::vector<ScalarLaw> laws{ScalarLaw::gaussian(0.0, 1.0)};
    const auto rep = concentration_check(laws, {{0.0, 1.0}}, 20000, 3);
    const double p = rep.rows[0].nu_bar;
    CHECK(rep.rows[0].exact == doctest::Approx(2 * p * (1 - p)).epsilon(1e-12));
    CHECK(std::abs(rep.rows[0].estimate - 2 * p * (1 - p)) < 6 * rep.rows[0].se);
  }
  SUBCASE("heterogeneous two-group laws") {
    std::vector<ScalarLaw> laws;
    for (int i = 0; i < 200; ++i) laws.push_back(i < 100 ? ScalarLaw::gaussian(-1.0, 0.5) : ScalarLaw::gaussian(1.5, 1.0));
    std::vector<Range> fam;
    for (int k = 0; k < 32; ++k) fam.push_back({-4.0 + 0.25 * k, -4.0 + 0.25 * (k + 1)});
    CHECK(concentration_check(laws, fam, 500, 4).ok);
  }
}

TEST_CASE("scalar laws") {
  CHECK(ScalarLaw::gaussian(0.0, 1.0).probability({0.0, INFINITY}) == doctest::Approx(0.5));
  CHECK(ScalarLaw::point(1.0).probability({1.0, 2.0}) == 1.0);
  CHECK(ScalarLaw::point(2.0).probability({1.0, 2.0}) == 0.0);
  CHECK(concentration_bound(0.01, 4) == doctest::Approx(0.02));
  CHECK(concentration_bound(0.5, 100) == doctest::Approx(std::sqrt(0.005)));
}
