#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmfs/matrix.hpp"

namespace gmfs {

/// f(x) = c1 - c2 x and b(x, y) = c3 + c4 x + c5 y, applied per coordinate.
struct AffineCoefficients {
  double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0, c5 = 0.0;
  bool operator==(const AffineCoefficients&) const = default;
};

enum class DriftKind { linear, mean_reverting, custom };

/// The drift pair (f, b) together with declared constants Kf, Kb, c0.
/// Construction rejects kappa = c0 - 2 Kb <= 0.
class DriftSpec {
 public:
  using SelfDrift = std::function<void(std::span<const double> x, std::span<double> out)>;
  using Interaction =
      std::function<void(std::span<const double> x, std::span<const double> y, std::span<double> out)>;

  /// Requires c2 > 0 and c2 - 2 max(|c4|,|c5|) > 0. Declares c0 = Kf = c2, Kb = max(|c4|,|c5|).
  static DriftSpec linear(double c1, double c2, double c3, double c4, double c5, std::size_t dimension = 1);
  /// f(x) = -(c1+c2) x, b(x,y) = c2 (x+y) with c1 > c2 > 0: c0 = Kf = c1+c2, Kb = c2.
  static DriftSpec mean_reverting(double c1, double c2, std::size_t dimension = 1);
  static DriftSpec custom(std::size_t dimension, SelfDrift f, Interaction b, double k_f, double k_b, double c0);

  std::size_t dimension() const { return dimension_; }
  DriftKind kind() const { return kind_; }
  double k_f() const { return k_f_; }
  double k_b() const { return k_b_; }
  double c0() const { return c0_; }
  double kappa() const { return c0_ - 2.0 * k_b_; }

  /// Affine form (used by the fast drift path and the Gaussian oracle).
  const std::optional<AffineCoefficients>& affine() const { return affine_; }
  /// Coefficients as given to the constructor (c1..c5 or c1,c2).
  const std::vector<double>& parameters() const { return parameters_; }

  void f(std::span<const double> x, std::span<double> out) const { f_(x, out); }
  void b(std::span<const double> x, std::span<const double> y, std::span<double> out) const { b_(x, y, out); }

  std::string describe() const;

 private:
  DriftSpec() = default;

  std::size_t dimension_ = 1;
  DriftKind kind_ = DriftKind::custom;
  double k_f_ = 0.0, k_b_ = 0.0, c0_ = 0.0;
  std::optional<AffineCoefficients> affine_;
  std::vector<double> parameters_;
  SelfDrift f_;
  Interaction b_;
};

/// Constant diffusion matrix sigma (d x d).
class DiffusionSpec {
 public:
  explicit DiffusionSpec(Matrix sigma);
  static DiffusionSpec scalar(double s, std::size_t dimension = 1);

  std::size_t dimension() const { return sigma_.rows(); }
  const Matrix& sigma() const { return sigma_; }
  /// s when sigma = s * I, otherwise empty.
  std::optional<double> scalar_value() const;

 private:
  Matrix sigma_;
};

enum class ConstantSource { declared, empirical };

struct RateConstants {
  double kappa = 0.0;
  double kappa1 = 0.0;  // sup second moment, continuum system
  double kappa2 = 0.0;  // uniform second-moment bound, finite system
  ConstantSource source = ConstantSource::empirical;

  static RateConstants for_spec(const DriftSpec& spec, double kappa1, double kappa2,
                                ConstantSource source = ConstantSource::empirical) {
    return {spec.kappa(), kappa1, kappa2, source};
  }
};

struct DissipativityReport {
  bool certified = true;
  /// min over samples of -(dx . df) - c0 |dx|^2, normalized by |dx|^2.
  double worst_margin = 0.0;
  double observed_k_f = 0.0;
  double observed_k_b = 0.0;
  std::size_t trials = 0;
  std::optional<std::pair<std::vector<double>, std::vector<double>>> counterexample;
  std::string failure;  // which inequality failed first, empty when certified
};

/// Samples pairs uniformly in the ball of the given radius and checks the
/// dissipativity inequality and the declared Lipschitz bounds.
DissipativityReport certify_dissipativity(const DriftSpec& spec, std::size_t trials, double radius,
                                          std::uint64_t seed);

/// sqrt(4 kappa1 (c0 - Kb) / kappa) * exp(-kappa t / 2).
double ergodicity_bound(const RateConstants& rc, double c0, double k_b, double t);
/// sqrt(4 kappa2) * exp(-kappa t): normalized joint-law bound of the finite system.
double finite_ergodicity_bound(const RateConstants& rc, double t);
/// a(n) = n^{-1/d} + n^{-1/12}.
double lln_rate_a(std::size_t n, std::size_t d);
/// Default Euler stability cap h0 = 0.1 / (Kf + 2 Kb + 1).
double default_stability_cap(const DriftSpec& spec);

}  // namespace gmfs
