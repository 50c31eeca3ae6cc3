#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "gmfs/matrix.hpp"

namespace gmfs {

/// Equal-weight cloud of m atoms in R^d.
class EmpiricalMeasure {
 public:
  explicit EmpiricalMeasure(std::vector<double> atoms, std::size_t dimension = 1);

  std::size_t size() const { return atoms_.size() / d_; }
  std::size_t dimension() const { return d_; }
  std::span<const double> atoms() const { return atoms_; }
  std::span<const double> atom(std::size_t i) const { return {atoms_.data() + i * d_, d_}; }
  std::vector<double> sorted_1d() const;

  static EmpiricalMeasure pooled(std::span<const EmpiricalMeasure> parts);

 private:
  std::vector<double> atoms_;
  std::size_t d_;
};

struct GaussianComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> variance;  // diagonal covariance
};

/// Finite Gaussian mixture with diagonal covariances; zero variance gives a point mass.
class MixtureLaw {
 public:
  explicit MixtureLaw(std::vector<GaussianComponent> components);
  static MixtureLaw gaussian(double mean, double variance);
  static MixtureLaw point_mass(double value);

  std::size_t dimension() const { return components_.front().mean.size(); }
  const std::vector<GaussianComponent>& components() const { return components_; }

  // 1D only
  double cdf(double x) const;
  /// Bisection to 1e-12 on [min(mean - 12 sd), max(mean + 12 sd)].
  double quantile(double p) const;
  double mean() const;
  double second_moment() const;

 private:
  void require_1d() const;
  std::vector<GaussianComponent> components_;
};

/// Quantiles of a 1D law at midpoint nodes p_j = (j + 1/2) / size.
class QuantileTable {
 public:
  static QuantileTable from_mixture(const MixtureLaw& law, std::size_t size);
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
};

/// Exact 1D W2 by sorted pairing; unequal counts via the common refinement of
/// the two piecewise-constant quantile functions.
double w2_empirical_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b);
/// 1D W1 (area between the CDFs).
double w1_empirical_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b);
/// Exact W2 for equal-count clouds in any dimension via minimum-cost matching.
double w2_assignment(const EmpiricalMeasure& a, const EmpiricalMeasure& b, std::size_t max_atoms = 4096);
/// W2 between N(m1, s1^2) and N(m2, s2^2).
double w2_gaussian_1d(double m1, double s1, double m2, double s2);

struct MixtureDistance {
  double value = 0.0;
  double refinement_error = 0.0;  // |W(grid) - W(2 grid)|
  std::size_t grid_size = 0;
};

MixtureDistance w2_empirical_vs_mixture_1d(const EmpiricalMeasure& a, const MixtureLaw& law,
                                           std::size_t grid_size = 4096);
/// W_p between sorted atoms and a quantile table, by midpoint quadrature in p.
double wp_sorted_vs_table(std::span<const double> sorted, const QuantileTable& table, double p = 2.0);

/// Cell averages of the quantile function of a 1D law on the uniform partition
/// of (0,1) into `cells` pieces: mean[k] = N * int_{k/N}^{(k+1)/N} Q(p) dp.
struct QuantileCells {
  std::vector<double> mean;
  double second_moment = 0.0;
};
QuantileCells quantile_cells(const MixtureLaw& law, std::size_t cells);
/// Exact W2 between N sorted atoms and a law, from its N quantile cells.
double w2_sorted_vs_cells(std::span<const double> sorted, const QuantileCells& cells);

/// Raw moments E[x^k], k = 1..order, one row per order, one column per coordinate.
Matrix moments(const EmpiricalMeasure& a, int order);

// ---------------------------------------------------------------------------
// Concentration of the empirical measure of independent, non-identical samples.

/// Half-open real interval [lo, hi).
struct Range {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double x) const { return x >= lo && x < hi; }
};

/// One-dimensional law that can be sampled and measured on ranges.
class ScalarLaw {
 public:
  static ScalarLaw gaussian(double mean, double sd);
  static ScalarLaw point(double value);
  static ScalarLaw discrete(std::vector<double> atoms, std::vector<double> probs);

  double probability(const Range& a) const;
  double sample(std::uint64_t key, std::uint64_t i, std::uint64_t replica) const;

 private:
  bool gaussian_ = false;
  double mean_ = 0.0, sd_ = 0.0;
  std::vector<double> atoms_, probs_;
};

double concentration_bound(double nu_bar, std::size_t n);
/// Exact E|nu_n(A) - nubar_n(A)| from the per-sample hit probabilities (Poisson-binomial).
double exact_concentration_lhs(std::span<const double> hit_probs);

struct ConcentrationRow {
  Range range;
  double nu_bar = 0.0;
  double estimate = 0.0;  // Monte Carlo mean of |nu_n(A) - nubar_n(A)|
  double se = 0.0;
  double bound = 0.0;
  double exact = std::numeric_limits<double>::quiet_NaN();  // when computed
  bool violated = false;  // estimate - band * se > bound (or exact > bound)
};

struct ConcentrationReport {
  std::size_t n = 0;
  std::size_t replicas = 0;
  std::vector<ConcentrationRow> rows;
  bool ok = true;
};

/// Monte Carlo check of E|nu_n(A) - nubar_n(A)| <= min{2 nubar_n(A), sqrt(nubar_n(A)/n)}.
/// When exact_up_to >= n the left side is also evaluated exactly.
ConcentrationReport concentration_check(const std::vector<ScalarLaw>& laws, const std::vector<Range>& family,
                                        std::size_t replicas, std::uint64_t seed, double band = 6.0,
                                        std::size_t exact_up_to = 30);

}  // namespace gmfs
