#include "gmfs/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "gmfs/assignment.hpp"
#include "gmfs/errors.hpp"
#include "gmfs/parallel.hpp"
#include "gmfs/rng.hpp"

namespace gmfs {

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> atoms, std::size_t dimension)
    : atoms_(std::move(atoms)), d_(dimension) {
  if (d_ == 0) throw DomainError("empirical measure: dimension must be >= 1");
  if (atoms_.empty() || atoms_.size() % d_ != 0)
    throw DomainError("empirical measure: need m >= 1 atoms of dimension d");
  for (double x : atoms_)
    if (!std::isfinite(x)) throw DomainError("empirical measure: non-finite atom");
}

std::vector<double> EmpiricalMeasure::sorted_1d() const {
  if (d_ != 1) throw CapabilityError("sorted_1d needs d = 1");
  std::vector<double> s = atoms_;
  std::sort(s.begin(), s.end());
  return s;
}

EmpiricalMeasure EmpiricalMeasure::pooled(std::span<const EmpiricalMeasure> parts) {
  if (parts.empty()) throw DomainError("pooled: no parts");
  std::vector<double> all;
  const std::size_t d = parts.front().dimension();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dimension() != d) throw DomainError("pooled: dimension mismatch");
    total += p.atoms().size();
  }
  all.reserve(total);
  for (const auto& p : parts) all.insert(all.end(), p.atoms().begin(), p.atoms().end());
  return EmpiricalMeasure(std::move(all), d);
}

// ---------------------------------------------------------------------------

MixtureLaw::MixtureLaw(std::vector<GaussianComponent> components) : components_(std::move(components)) {
  if (components_.empty()) throw DomainError("mixture: no components");
  const std::size_t d = components_.front().mean.size();
  if (d == 0) throw DomainError("mixture: empty mean");
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.mean.size() != d || c.variance.size() != d) throw DomainError("mixture: dimension mismatch");
    if (!(c.weight >= 0.0)) throw DomainError("mixture: negative weight");
    for (double v : c.variance)
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("mixture: variance must be finite and >= 0");
    for (double m : c.mean)
      if (!std::isfinite(m)) throw DomainError("mixture: non-finite mean");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture: weights must sum to 1");
}

MixtureLaw MixtureLaw::gaussian(double mean, double variance) {
  return MixtureLaw({GaussianComponent{1.0, {mean}, {variance}}});
}

MixtureLaw MixtureLaw::point_mass(double value) { return gaussian(value, 0.0); }

void MixtureLaw::require_1d() const {
  if (dimension() != 1) throw CapabilityError("mixture: operation needs d = 1");
}

namespace {
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
}  // namespace

double MixtureLaw::cdf(double x) const {
  require_1d();
  double f = 0.0;
  for (const auto& c : components_) {
    const double s = std::sqrt(c.variance[0]);
    f += c.weight * (s > 0.0 ? normal_cdf((x - c.mean[0]) / s) : (x >= c.mean[0] ? 1.0 : 0.0));
  }
  return f;
}

double MixtureLaw::quantile(double p) const {
  require_1d();
  if (!(p > 0.0 && p < 1.0)) throw DomainError("mixture quantile: p must lie in (0,1)");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : components_) {
    const double s = std::sqrt(c.variance[0]);
    lo = std::min(lo, c.mean[0] - 12.0 * s);
    hi = std::max(hi, c.mean[0] + 12.0 * s);
  }
  lo -= 1e-9 * (1.0 + std::abs(lo));
  if (cdf(lo) >= p || cdf(hi) < p) throw NumericError("mixture quantile: bracket does not contain p");
  // invariant: F(lo) < p <= F(hi)
  while (hi - lo > 1e-12 * std::max(1.0, std::abs(hi))) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (cdf(mid) >= p)
      hi = mid;
    else
      lo = mid;
  }
  for (const auto& c : components_)
    if (c.variance[0] == 0.0 && std::abs(hi - c.mean[0]) <= 2e-12 * std::max(1.0, std::abs(c.mean[0])))
      return c.mean[0];
  return hi;
}

double MixtureLaw::mean() const {
  require_1d();
  double s = 0.0;
  for (const auto& c : components_) s += c.weight * c.mean[0];
  return s;
}

double MixtureLaw::second_moment() const {
  require_1d();
  double s = 0.0;
  for (const auto& c : components_) s += c.weight * (c.variance[0] + c.mean[0] * c.mean[0]);
  return s;
}

QuantileTable QuantileTable::from_mixture(const MixtureLaw& law, std::size_t size) {
  if (size == 0) throw DomainError("quantile table: size must be >= 1");
  QuantileTable t;
  t.values_.resize(size);
  parallel_for(size, [&](std::size_t j) {
    t.values_[j] = law.quantile((static_cast<double>(j) + 0.5) / static_cast<double>(size));
  });
  return t;
}

// ---------------------------------------------------------------------------

namespace {

void require_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.dimension() != 1 || b.dimension() != 1)
    throw CapabilityError("1D estimator called with d > 1; use w2_assignment");
}

// Integral over p in (0,1) of cost(Q_a(p), Q_b(p)) for piecewise-constant quantiles.
template <class Cost>
double quantile_integral(const std::vector<double>& a, const std::vector<double>& b, Cost cost) {
  const std::size_t ma = a.size(), mb = b.size();
  if (ma == mb) {
    double s = 0.0;
    for (std::size_t k = 0; k < ma; ++k) s += cost(a[k], b[k]);
    return s / static_cast<double>(ma);
  }
  // breakpoints (i+1)/ma and (j+1)/mb on the common denominator ma*mb
  const unsigned long long A = ma, B = mb;
  unsigned long long cur = 0;
  std::size_t i = 0, j = 0;
  double s = 0.0;
  while (i < ma && j < mb) {
    const unsigned long long ea = (i + 1) * B, eb = (j + 1) * A;
    const unsigned long long next = std::min(ea, eb);
    s += cost(a[i], b[j]) * static_cast<double>(next - cur);
    cur = next;
    if (ea == next) ++i;
    if (eb == next) ++j;
  }
  return s / (static_cast<double>(A) * static_cast<double>(B));
}

}  // namespace

double w2_empirical_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  require_1d(a, b);
  const double s = quantile_integral(a.sorted_1d(), b.sorted_1d(), [](double x, double y) { return (x - y) * (x - y); });
  return std::sqrt(s);
}

double w1_empirical_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  require_1d(a, b);
  return quantile_integral(a.sorted_1d(), b.sorted_1d(), [](double x, double y) { return std::abs(x - y); });
}

double w2_assignment(const EmpiricalMeasure& a, const EmpiricalMeasure& b, std::size_t max_atoms) {
  if (a.dimension() != b.dimension()) throw DomainError("w2_assignment: dimension mismatch");
  if (a.size() != b.size()) throw DomainError("w2_assignment: needs equal atom counts");
  const std::size_t m = a.size(), d = a.dimension();
  if (m > max_atoms) throw CapabilityError("w2_assignment: atom count exceeds the size cap");
  Matrix cost(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto x = a.atom(i);
    for (std::size_t j = 0; j < m; ++j) {
      const auto y = b.atom(j);
      double c = 0.0;
      for (std::size_t k = 0; k < d; ++k) c += (x[k] - y[k]) * (x[k] - y[k]);
      cost(i, j) = c;
    }
  }
  return std::sqrt(std::max(0.0, min_cost_assignment(cost).cost / static_cast<double>(m)));
}

double w2_gaussian_1d(double m1, double s1, double m2, double s2) {
  if (s1 < 0.0 || s2 < 0.0) throw DomainError("w2_gaussian_1d: standard deviations must be >= 0");
  return std::hypot(m1 - m2, s1 - s2);
}

double wp_sorted_vs_table(std::span<const double> sorted, const QuantileTable& table, double p) {
  if (sorted.empty()) throw DomainError("wp: empty sample");
  if (!(p >= 1.0)) throw DomainError("wp: p must be >= 1");
  const std::size_t g = table.size(), m = sorted.size();
  const auto q = table.values();
  double s = 0.0;
  for (std::size_t j = 0; j < g; ++j) {
    // Q_emp(p_j) with p_j = (j + 1/2)/g; index floor(p_j m)
    const std::size_t k = std::min(m - 1, static_cast<std::size_t>((2 * j + 1) * m / (2 * g)));
    const double diff = std::abs(sorted[k] - q[j]);
    s += p == 2.0 ? diff * diff : std::pow(diff, p);
  }
  s /= static_cast<double>(g);
  return p == 2.0 ? std::sqrt(s) : std::pow(s, 1.0 / p);
}

MixtureDistance w2_empirical_vs_mixture_1d(const EmpiricalMeasure& a, const MixtureLaw& law, std::size_t grid_size) {
  if (a.dimension() != 1) throw CapabilityError("w2_empirical_vs_mixture_1d needs d = 1");
  if (grid_size == 0) throw DomainError("grid_size must be >= 1");
  const auto sorted = a.sorted_1d();
  const double coarse = wp_sorted_vs_table(sorted, QuantileTable::from_mixture(law, grid_size));
  const double fine = wp_sorted_vs_table(sorted, QuantileTable::from_mixture(law, 2 * grid_size));
  if (!std::isfinite(coarse) || !std::isfinite(fine)) throw NumericError("mixture inversion produced non-finite values");
  return {coarse, std::abs(coarse - fine), grid_size};
}

namespace {

// int_0^p Q(r) dr, written through q = Q(p): the part of an atom at q that
// lies below level p contributes q * (p - F(q-)).
double quantile_integral_to(const MixtureLaw& law, double p) {
  const double q = law.quantile(p);
  double pe = 0.0, f = 0.0;
  for (const auto& c : law.components()) {
    const double mu = c.mean[0], s = std::sqrt(c.variance[0]);
    if (s > 0.0) {
      const double z = (q - mu) / s;
      const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      const double cdf = normal_cdf(z);
      pe += c.weight * (mu * cdf - s * phi);
      f += c.weight * cdf;
    } else if (mu < q) {
      pe += c.weight * mu;
      f += c.weight;
    }
  }
  return pe + q * (p - f);
}

}  // namespace

QuantileCells quantile_cells(const MixtureLaw& law, std::size_t cells) {
  if (cells == 0) throw DomainError("quantile_cells: need at least one cell");
  if (law.dimension() != 1) throw CapabilityError("quantile_cells needs d = 1");
  const double nd = static_cast<double>(cells);
  std::vector<double> cum(cells + 1);
  cum[0] = 0.0;
  cum[cells] = law.mean();
  parallel_for(cells - 1, [&](std::size_t k) {
    cum[k + 1] = quantile_integral_to(law, static_cast<double>(k + 1) / nd);
  });
  QuantileCells out;
  out.mean.resize(cells);
  for (std::size_t k = 0; k < cells; ++k) out.mean[k] = nd * (cum[k + 1] - cum[k]);
  out.second_moment = law.second_moment();
  return out;
}

double w2_sorted_vs_cells(std::span<const double> sorted, const QuantileCells& cells) {
  const std::size_t n = sorted.size();
  if (n != cells.mean.size()) throw DomainError("w2_sorted_vs_cells: atom count does not match cell count");
  // int (Q_emp - Q)^2 = (1/N) sum x_k^2 - 2 (1/N) sum x_k mean_k + E X^2
  double sq = 0.0, cross = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sq += sorted[k] * sorted[k];
    cross += sorted[k] * cells.mean[k];
  }
  const double nd = static_cast<double>(n);
  return std::sqrt(std::max(0.0, sq / nd - 2.0 * cross / nd + cells.second_moment));
}

Matrix moments(const EmpiricalMeasure& a, int order) {
  if (order < 1 || order > 4) throw DomainError("moments: order must be in 1..4");
  const std::size_t m = a.size(), d = a.dimension();
  Matrix out(static_cast<std::size_t>(order), d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto x = a.atom(i);
    for (std::size_t c = 0; c < d; ++c) {
      double pw = 1.0;
      for (int k = 0; k < order; ++k) {
        pw *= x[c];
        out(static_cast<std::size_t>(k), c) += pw;
      }
    }
  }
  for (std::size_t k = 0; k < static_cast<std::size_t>(order); ++k)
    for (std::size_t c = 0; c < d; ++c) out(k, c) /= static_cast<double>(m);
  return out;
}

// ---------------------------------------------------------------------------

ScalarLaw ScalarLaw::gaussian(double mean, double sd) {
  if (!(sd >= 0.0) || !std::isfinite(mean)) throw DomainError("scalar gaussian: need finite mean and sd >= 0");
  if (sd == 0.0) return point(mean);
  ScalarLaw l;
  l.gaussian_ = true;
  l.mean_ = mean;
  l.sd_ = sd;
  return l;
}

ScalarLaw ScalarLaw::point(double value) { return discrete({value}, {1.0}); }

ScalarLaw ScalarLaw::discrete(std::vector<double> atoms, std::vector<double> probs) {
  if (atoms.empty() || atoms.size() != probs.size()) throw DomainError("discrete law: atoms/probs mismatch");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw DomainError("discrete law: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("discrete law: probabilities must sum to 1");
  ScalarLaw l;
  l.atoms_ = std::move(atoms);
  l.probs_ = std::move(probs);
  return l;
}

double ScalarLaw::probability(const Range& a) const {
  if (gaussian_) {
    auto F = [&](double x) {
      if (x == -std::numeric_limits<double>::infinity()) return 0.0;
      if (x == std::numeric_limits<double>::infinity()) return 1.0;
      return normal_cdf((x - mean_) / sd_);
    };
    return std::max(0.0, F(a.hi) - F(a.lo));
  }
  double p = 0.0;
  for (std::size_t k = 0; k < atoms_.size(); ++k)
    if (a.contains(atoms_[k])) p += probs_[k];
  return p;
}

double ScalarLaw::sample(std::uint64_t key, std::uint64_t i, std::uint64_t replica) const {
  if (gaussian_) return mean_ + sd_ * rng::normal(key, i, replica);
  if (atoms_.size() == 1) return atoms_[0];
  const double u = rng::uniform(key, i, replica);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < atoms_.size(); ++k) {
    acc += probs_[k];
    if (u < acc) return atoms_[k];
  }
  return atoms_.back();
}

double concentration_bound(double nu_bar, std::size_t n) {
  return std::min(2.0 * nu_bar, std::sqrt(nu_bar / static_cast<double>(n)));
}

double exact_concentration_lhs(std::span<const double> hit_probs) {
  const std::size_t n = hit_probs.size();
  if (n == 0) throw DomainError("exact_concentration_lhs: no samples");
  std::vector<double> dist(n + 1, 0.0);
  dist[0] = 1.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = hit_probs[i];
    mean += p;
    for (std::size_t k = i + 1; k > 0; --k) dist[k] = dist[k] * (1.0 - p) + dist[k - 1] * p;
    dist[0] *= 1.0 - p;
  }
  const double nd = static_cast<double>(n);
  mean /= nd;
  double e = 0.0;
  for (std::size_t k = 0; k <= n; ++k) e += dist[k] * std::abs(static_cast<double>(k) / nd - mean);
  return e;
}

ConcentrationReport concentration_check(const std::vector<ScalarLaw>& laws, const std::vector<Range>& family,
                                        std::size_t replicas, std::uint64_t seed, double band,
                                        std::size_t exact_up_to) {
  const std::size_t n = laws.size();
  if (n == 0) throw DomainError("concentration_check: no laws");
  if (replicas < 2) throw DomainError("concentration_check: need at least 2 replicas");
  const std::size_t fam = family.size();
  const double nd = static_cast<double>(n);

  ConcentrationReport report;
  report.n = n;
  report.replicas = replicas;
  report.rows.resize(fam);
  std::vector<double> probs(n);
  for (std::size_t a = 0; a < fam; ++a) {
    auto& row = report.rows[a];
    row.range = family[a];
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (probs[i] = laws[i].probability(family[a]));
    row.nu_bar = s / nd;
    row.bound = concentration_bound(row.nu_bar, n);
    if (n <= exact_up_to) row.exact = exact_concentration_lhs(probs);
  }

  const std::uint64_t key = rng::derive_key(seed, rng::Stream::concentration, n);
  std::vector<double> dev(replicas * fam);
  parallel_for(replicas, [&](std::size_t r) {
    std::vector<std::size_t> hits(fam, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = laws[i].sample(key, i, r);
      for (std::size_t a = 0; a < fam; ++a)
        if (family[a].contains(y)) ++hits[a];
    }
    for (std::size_t a = 0; a < fam; ++a)
      dev[r * fam + a] = std::abs(static_cast<double>(hits[a]) / nd - report.rows[a].nu_bar);
  });
  std::vector<double> sum(fam, 0.0), sum_sq(fam, 0.0);
  for (std::size_t r = 0; r < replicas; ++r)
    for (std::size_t a = 0; a < fam; ++a) {
      sum[a] += dev[r * fam + a];
      sum_sq[a] += dev[r * fam + a] * dev[r * fam + a];
    }
  const double rd = static_cast<double>(replicas);
  for (std::size_t a = 0; a < fam; ++a) {
    auto& row = report.rows[a];
    row.estimate = sum[a] / rd;
    const double var = std::max(0.0, (sum_sq[a] - rd * row.estimate * row.estimate) / (rd - 1.0));
    row.se = std::sqrt(var / rd);
    const double slack = 1e-12;
    row.violated = row.estimate - band * row.se > row.bound + slack ||
                   (std::isfinite(row.exact) && row.exact > row.bound + slack);
    if (row.violated) report.ok = false;
  }
  return report;
}

}  // namespace gmfs
