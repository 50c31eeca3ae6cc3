#include "gmfs/fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "gmfs/errors.hpp"
#include "gmfs/parallel.hpp"
#include "gmfs/rng.hpp"

namespace gmfs::fit {

Line ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("ols: size mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw DomainError("ols: need at least two points");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("ols: x values are all equal");
  Line l;
  l.slope = sxy / sxx;
  l.intercept = my - l.slope * mx;
  l.points = n;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - l.intercept - l.slope * x[i];
    ss += r * r;
  }
  l.rms_residual = std::sqrt(ss / static_cast<double>(n));
  return l;
}

NnlsResult nnls(const Matrix& a, std::span<const double> y) {
  const std::size_t rows = a.rows(), cols = a.cols();
  if (y.size() != rows) throw DomainError("nnls: size mismatch");
  if (cols == 0 || cols > 16) throw CapabilityError("nnls: supports 1..16 columns");
  Eigen::MatrixXd am(rows, cols);
  Eigen::VectorXd ym(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    ym(static_cast<Eigen::Index>(i)) = y[i];
    for (std::size_t j = 0; j < cols; ++j) am(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a(i, j);
  }
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cols));
  for (std::uint32_t mask = 0; mask < (1u << cols); ++mask) {
    std::vector<Eigen::Index> idx;
    for (std::size_t j = 0; j < cols; ++j)
      if (mask & (1u << j)) idx.push_back(static_cast<Eigen::Index>(j));
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cols));
    if (!idx.empty()) {
      Eigen::MatrixXd sub(rows, idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = am.col(idx[k]);
      const Eigen::VectorXd s = sub.colPivHouseholderQr().solve(ym);
      if ((s.array() < 0.0).any() || !s.allFinite()) continue;
      for (std::size_t k = 0; k < idx.size(); ++k) c(idx[k]) = s(static_cast<Eigen::Index>(k));
    }
    const double r = (am * c - ym).squaredNorm();
    if (r < best) {
      best = r;
      best_c = c;
    }
  }
  NnlsResult out;
  out.coefficients.assign(best_c.data(), best_c.data() + cols);
  const Eigen::VectorXd res = ym - am * best_c;
  out.residuals.assign(res.data(), res.data() + rows);
  out.rms_residual = std::sqrt(res.squaredNorm() / static_cast<double>(rows));
  out.max_abs_residual = rows ? res.cwiseAbs().maxCoeff() : 0.0;
  return out;
}

namespace {

std::vector<std::size_t> resample(std::uint64_t key, std::size_t b, std::size_t replicas) {
  std::vector<std::size_t> pick(replicas);
  for (std::size_t r = 0; r < replicas; ++r)
    pick[r] = std::min(replicas - 1, static_cast<std::size_t>(rng::uniform(key, b, r) * static_cast<double>(replicas)));
  std::sort(pick.begin(), pick.end());
  return pick;
}

Interval percentile_interval(std::vector<double> v, double level) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  std::sort(v.begin(), v.end());
  auto pct = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(v.size() - 1, lo + 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double tail = 0.5 * (1.0 - level);
  return {pct(tail), pct(1.0 - tail)};
}

}  // namespace

std::vector<Interval> bootstrap_many(
    std::size_t replicas, std::size_t resamples, std::uint64_t seed,
    const std::function<std::optional<std::vector<double>>(const std::vector<std::size_t>&)>& statistic,
    std::size_t components, double level) {
  if (replicas == 0 || resamples == 0) throw DomainError("bootstrap: need replicas and resamples");
  const std::uint64_t key = rng::derive_key(seed, rng::Stream::bootstrap);
  std::vector<std::optional<std::vector<double>>> values(resamples);
  parallel_for(resamples, [&](std::size_t b) { values[b] = statistic(resample(key, b, replicas)); });
  std::vector<Interval> out;
  for (std::size_t c = 0; c < components; ++c) {
    std::vector<double> v;
    for (const auto& x : values)
      if (x && c < x->size() && std::isfinite((*x)[c])) v.push_back((*x)[c]);
    out.push_back(percentile_interval(std::move(v), level));
  }
  return out;
}

Interval bootstrap(std::size_t replicas, std::size_t resamples, std::uint64_t seed,
                   const std::function<std::optional<double>(const std::vector<std::size_t>&)>& statistic,
                   double level) {
  return bootstrap_many(
      replicas, resamples, seed,
      [&](const std::vector<std::size_t>& pick) -> std::optional<std::vector<double>> {
        const auto v = statistic(pick);
        if (!v) return std::nullopt;
        return std::vector<double>{*v};
      },
      1, level)[0];
}

double mean(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double standard_error(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

double jackknife_se(std::span<const double> loo) {
  const std::size_t n = loo.size();
  if (n < 2) return 0.0;
  const double m = mean(loo);
  double ss = 0.0;
  for (double v : loo) ss += (v - m) * (v - m);
  return std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n) * ss);
}

}  // namespace gmfs::fit
