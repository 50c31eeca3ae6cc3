#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gmfs/matrix.hpp"

namespace gmfs::fit {

struct Line {
  double slope = 0.0;
  double intercept = 0.0;
  double rms_residual = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = intercept + slope x. Needs two distinct x values.
Line ols(std::span<const double> x, std::span<const double> y);

struct NnlsResult {
  std::vector<double> coefficients;
  std::vector<double> residuals;
  double rms_residual = 0.0;
  double max_abs_residual = 0.0;
};

/// min |A c - y| subject to c >= 0, by enumerating active sets (columns <= 16).
NnlsResult nnls(const Matrix& a, std::span<const double> y);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile interval of `statistic` over `resamples` replica bootstraps.
/// The statistic receives a multiset of replica indices and may return nullopt
/// when a resample is degenerate; such resamples are skipped.
Interval bootstrap(std::size_t replicas, std::size_t resamples, std::uint64_t seed,
                   const std::function<std::optional<double>(const std::vector<std::size_t>&)>& statistic,
                   double level = 0.95);

/// Joint version for statistics with several components; each gets its own
/// percentile interval from the same resamples.
std::vector<Interval> bootstrap_many(
    std::size_t replicas, std::size_t resamples, std::uint64_t seed,
    const std::function<std::optional<std::vector<double>>(const std::vector<std::size_t>&)>& statistic,
    std::size_t components, double level = 0.95);

double mean(std::span<const double> x);
/// Standard error of the mean (sample sd / sqrt(count)); 0 for fewer than two values.
double standard_error(std::span<const double> x);
/// Leave-one-out jackknife standard error from the leave-one-out estimates.
double jackknife_se(std::span<const double> leave_one_out);

}  // namespace gmfs::fit
