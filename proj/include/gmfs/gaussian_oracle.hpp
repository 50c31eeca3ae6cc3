#pragma once

// Moment equations of the linear scalar graphon system. Every label's marginal
// is Gaussian, so the pair (m_u, M_u) of first and second moments is the whole law.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "gmfs/dynamics.hpp"
#include "gmfs/graphon.hpp"
#include "gmfs/measures.hpp"

namespace gmfs {

/// Means and second moments on the midpoint label grid u_k = (k + 1/2)/K.
struct MomentField {
  double t = 0.0;
  std::vector<double> labels;
  std::vector<double> m;
  std::vector<double> M;

  std::size_t size() const { return labels.size(); }
  double variance(std::size_t k) const { return M[k] - m[k] * m[k]; }
  /// Linear interpolation between grid labels, constant beyond the end nodes.
  double mean_at(double u) const;
  double second_moment_at(double u) const;
  double variance_at(double u) const;

  static std::vector<double> midpoint_grid(std::size_t k);
  /// Field of an initial law with label-dependent mean and variance.
  static MomentField from_law(std::size_t k, const std::function<double(double)>& mean,
                              const std::function<double(double)>& variance);
};

/// Linear scalar model: f(x) = c1 - c2 x, b(x, y) = c3 + c4 x + c5 y, diffusion sigma.
struct LinearModel {
  AffineCoefficients c;
  double sigma = 1.0;

  /// Needs an affine drift in d = 1 with scalar diffusion.
  static LinearModel from(const DriftSpec& spec, const DiffusionSpec& diffusion);
  void validate() const;
  double contraction_margin() const { return c.c2 - std::abs(c.c4) - std::abs(c.c5); }
};

/// RK4 on the coupled (m, M) system from `initial` through each of `times`
/// (increasing, >= initial.t). The step is at most dt and lands on every time.
std::vector<MomentField> integrate_moments(const Graphon& g, const LinearModel& model, const MomentField& initial,
                                           const std::vector<double>& times, double dt);

struct StationaryResult {
  MomentField field;
  std::size_t iterations = 0;
  std::vector<double> increments;  // sup-norm change per iteration
};

/// Fixed point m = (c1 + int (c3 + c5 m_v) G dv) / (c2 - c4 int G dv), then the
/// second-moment equation solved directly.
StationaryResult solve_stationary(const Graphon& g, const LinearModel& model, std::size_t k, double tol = 1e-14,
                                  std::size_t max_iterations = 100000);

/// Equal-weight Gaussian mixture over the grid labels; identical components are merged.
MixtureLaw averaged_law(const MomentField& field);

struct ContinuityReport {
  std::vector<double> ratios;       // W2(adjacent labels) / spacing
  std::vector<std::size_t> flagged;  // indices k whose pair (k, k+1) straddles a partition boundary
  double max_ratio = 0.0;           // over unflagged pairs
  double max_ratio_all = 0.0;
};

/// Gaussian W2 between neighbouring labels per unit label distance. Pairs that
/// straddle a declared partition boundary (or a step-kernel boundary) are flagged.
ContinuityReport label_continuity_check(const MomentField& field, const Graphon& g);

}  // namespace gmfs
