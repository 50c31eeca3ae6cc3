#include "gmfs/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gmfs/errors.hpp"
#include "gmfs/rng.hpp"

namespace gmfs {

namespace {

DriftSpec::SelfDrift affine_f(double c1, double c2) {
  return [c1, c2](std::span<const double> x, std::span<double> out) {
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = c1 - c2 * x[k];
  };
}

DriftSpec::Interaction affine_b(double c3, double c4, double c5) {
  return [c3, c4, c5](std::span<const double> x, std::span<const double> y, std::span<double> out) {
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = c3 + c4 * x[k] + c5 * y[k];
  };
}

}  // namespace

DriftSpec DriftSpec::linear(double c1, double c2, double c3, double c4, double c5, std::size_t dimension) {
  const double kb = std::max(std::abs(c4), std::abs(c5));
  if (!(c2 > 0.0)) throw DomainError("linear drift needs c2 > 0");
  if (!(c2 - 2.0 * kb > 0.0)) throw DomainError("linear drift needs c2 - 2 max(|c4|,|c5|) > 0");
  if (dimension == 0) throw DomainError("dimension must be >= 1");
  DriftSpec s;
  s.dimension_ = dimension;
  s.kind_ = DriftKind::linear;
  s.c0_ = c2;
  s.k_f_ = c2;
  s.k_b_ = kb;
  s.affine_ = AffineCoefficients{c1, c2, c3, c4, c5};
  s.parameters_ = {c1, c2, c3, c4, c5};
  s.f_ = affine_f(c1, c2);
  s.b_ = affine_b(c3, c4, c5);
  return s;
}

DriftSpec DriftSpec::mean_reverting(double c1, double c2, std::size_t dimension) {
  if (!(c1 > c2 && c2 > 0.0)) throw DomainError("mean-reverting drift needs c1 > c2 > 0");
  if (dimension == 0) throw DomainError("dimension must be >= 1");
  DriftSpec s;
  s.dimension_ = dimension;
  s.kind_ = DriftKind::mean_reverting;
  s.c0_ = c1 + c2;
  s.k_f_ = c1 + c2;
  s.k_b_ = c2;
  s.affine_ = AffineCoefficients{0.0, c1 + c2, 0.0, c2, c2};
  s.parameters_ = {c1, c2};
  s.f_ = affine_f(0.0, c1 + c2);
  s.b_ = affine_b(0.0, c2, c2);
  return s;
}

DriftSpec DriftSpec::custom(std::size_t dimension, SelfDrift f, Interaction b, double k_f, double k_b, double c0) {
  if (dimension == 0) throw DomainError("dimension must be >= 1");
  if (!f || !b) throw DomainError("custom drift needs both f and b");
  if (!(k_f >= 0.0 && k_b >= 0.0 && c0 > 0.0)) throw DomainError("declared constants must be Kf, Kb >= 0 and c0 > 0");
  if (!(c0 - 2.0 * k_b > 0.0)) throw DomainError("kappa = c0 - 2 Kb must be positive");
  DriftSpec s;
  s.dimension_ = dimension;
  s.kind_ = DriftKind::custom;
  s.c0_ = c0;
  s.k_f_ = k_f;
  s.k_b_ = k_b;
  s.f_ = std::move(f);
  s.b_ = std::move(b);
  return s;
}

std::string DriftSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case DriftKind::linear: os << "linear"; break;
    case DriftKind::mean_reverting: os << "mean_reverting"; break;
    case DriftKind::custom: os << "custom"; break;
  }
  os << "(";
  for (std::size_t i = 0; i < parameters_.size(); ++i) os << (i ? "," : "") << parameters_[i];
  os << ";Kf=" << k_f_ << ",Kb=" << k_b_ << ",c0=" << c0_ << ",d=" << dimension_ << ")";
  return os.str();
}

DiffusionSpec::DiffusionSpec(Matrix sigma) : sigma_(std::move(sigma)) {
  if (sigma_.rows() == 0 || sigma_.rows() != sigma_.cols()) throw DomainError("sigma must be a non-empty square matrix");
  for (double v : sigma_.data())
    if (!std::isfinite(v)) throw DomainError("sigma entries must be finite");
}

DiffusionSpec DiffusionSpec::scalar(double s, std::size_t dimension) {
  if (!(s >= 0.0)) throw DomainError("diffusion scale must be non-negative");
  return DiffusionSpec(Matrix::identity(dimension, s));
}

std::optional<double> DiffusionSpec::scalar_value() const {
  const double s = sigma_(0, 0);
  for (std::size_t i = 0; i < sigma_.rows(); ++i)
    for (std::size_t j = 0; j < sigma_.cols(); ++j)
      if (sigma_(i, j) != (i == j ? s : 0.0)) return std::nullopt;
  return s;
}

DissipativityReport certify_dissipativity(const DriftSpec& spec, std::size_t trials, double radius,
                                          std::uint64_t seed) {
  if (trials == 0) throw DomainError("certify_dissipativity needs trials >= 1");
  const std::size_t d = spec.dimension();
  rng::KeyedStream stream(rng::derive_key(seed, rng::Stream::certify));
  auto ball_point = [&](std::vector<double>& p) {
    double norm2 = 0.0;
    for (auto& v : p) {
      v = stream.normal();
      norm2 += v * v;
    }
    const double r = radius * std::pow(stream.uniform(), 1.0 / static_cast<double>(d));
    const double scale = norm2 > 0.0 ? r / std::sqrt(norm2) : 0.0;
    for (auto& v : p) v *= scale;
  };

  DissipativityReport report;
  report.trials = trials;
  report.worst_margin = std::numeric_limits<double>::infinity();
  std::vector<double> x1(d), x2(d), y1(d), y2(d), f1(d), f2(d), b1(d), b2(d);
  for (std::size_t t = 0; t < trials; ++t) {
    ball_point(x1);
    ball_point(x2);
    ball_point(y1);
    ball_point(y2);
    spec.f(x1, f1);
    spec.f(x2, f2);
    spec.b(x1, y1, b1);
    spec.b(x2, y2, b2);
    double dx2 = 0.0, dy2 = 0.0, inner = 0.0, df2 = 0.0, db2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double dx = x1[k] - x2[k];
      dx2 += dx * dx;
      dy2 += (y1[k] - y2[k]) * (y1[k] - y2[k]);
      inner += dx * (f1[k] - f2[k]);
      df2 += (f1[k] - f2[k]) * (f1[k] - f2[k]);
      db2 += (b1[k] - b2[k]) * (b1[k] - b2[k]);
    }
    if (dx2 == 0.0) continue;
    const double margin = (-inner - spec.c0() * dx2) / dx2;
    const double kf_ratio = std::sqrt(df2 / dx2);
    const double kb_ratio = std::sqrt(db2) / (std::sqrt(dx2) + std::sqrt(dy2));
    report.worst_margin = std::min(report.worst_margin, margin);
    report.observed_k_f = std::max(report.observed_k_f, kf_ratio);
    report.observed_k_b = std::max(report.observed_k_b, kb_ratio);
    const double slack = 1e-9 * (1.0 + spec.c0() + spec.k_f() + spec.k_b());
    std::string failure;
    if (margin < -slack) failure = "dissipativity";
    else if (kf_ratio > spec.k_f() + slack) failure = "Lipschitz bound of f";
    else if (kb_ratio > spec.k_b() + slack) failure = "Lipschitz bound of b";
    if (!failure.empty() && report.certified) {
      report.certified = false;
      report.failure = failure;
      report.counterexample = std::pair{x1, x2};
    }
  }
  return report;
}

double ergodicity_bound(const RateConstants& rc, double c0, double k_b, double t) {
  if (!(rc.kappa > 0.0)) throw DomainError("ergodicity bound needs kappa > 0");
  if (!(t >= 0.0)) throw DomainError("ergodicity bound needs t >= 0");
  return std::sqrt(4.0 * rc.kappa1 * (c0 - k_b) / rc.kappa) * std::exp(-rc.kappa * t / 2.0);
}

double finite_ergodicity_bound(const RateConstants& rc, double t) {
  if (!(rc.kappa > 0.0)) throw DomainError("ergodicity bound needs kappa > 0");
  return std::sqrt(4.0 * rc.kappa2) * std::exp(-rc.kappa * t);
}

double lln_rate_a(std::size_t n, std::size_t d) {
  if (n == 0 || d == 0) throw DomainError("lln_rate_a needs n, d >= 1");
  const double nn = static_cast<double>(n);
  return std::pow(nn, -1.0 / static_cast<double>(d)) + std::pow(nn, -1.0 / 12.0);
}

double default_stability_cap(const DriftSpec& spec) { return 0.1 / (spec.k_f() + 2.0 * spec.k_b() + 1.0); }

}  // namespace gmfs
