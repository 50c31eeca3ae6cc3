#include "gmfs/gaussian_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "gmfs/errors.hpp"

namespace gmfs {

namespace {

constexpr double kVarianceTol = 1e-9;

double interpolate(const std::vector<double>& labels, const std::vector<double>& y, double u) {
  const std::size_t k = labels.size();
  if (u <= labels.front()) return y.front();
  if (u >= labels.back()) return y.back();
  const double spacing = labels[1] - labels[0];
  std::size_t j = std::min(k - 2, static_cast<std::size_t>((u - labels.front()) / spacing));
  const double w = (u - labels[j]) / (labels[j + 1] - labels[j]);
  return (1.0 - w) * y[j] + w * y[j + 1];
}

// W(k,l) = G(u_k, u_l) / K and its row sums.
struct KernelGrid {
  std::size_t k = 0;
  std::vector<double> w;
  std::vector<double> g;

  KernelGrid(const Graphon& graphon, const std::vector<double>& labels) : k(labels.size()), w(k * k), g(k, 0.0) {
    const double inv = 1.0 / static_cast<double>(k);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        w[a * k + b] = graphon.eval(labels[a], labels[b]) * inv;
        g[a] += w[a * k + b];
      }
  }

  void apply(const std::vector<double>& x, std::vector<double>& out) const {
    out.assign(k, 0.0);
    for (std::size_t a = 0; a < k; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < k; ++b) s += w[a * k + b] * x[b];
      out[a] = s;
    }
  }
};

void check_variance(const MomentField& f) {
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f.variance(i) < -kVarianceTol || !std::isfinite(f.M[i]) || !std::isfinite(f.m[i]))
      throw NumericError("moment field: negative variance at label " + std::to_string(f.labels[i]) +
                         " (grid too coarse?)");
}

}  // namespace

std::vector<double> MomentField::midpoint_grid(std::size_t k) {
  if (k == 0) throw DomainError("label grid needs K >= 1");
  std::vector<double> u(k);
  for (std::size_t i = 0; i < k; ++i) u[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
  return u;
}

MomentField MomentField::from_law(std::size_t k, const std::function<double(double)>& mean,
                                  const std::function<double(double)>& variance) {
  MomentField f;
  f.labels = midpoint_grid(k);
  f.m.resize(k);
  f.M.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    f.m[i] = mean(f.labels[i]);
    f.M[i] = variance(f.labels[i]) + f.m[i] * f.m[i];
  }
  check_variance(f);
  return f;
}

double MomentField::mean_at(double u) const { return interpolate(labels, m, u); }
double MomentField::second_moment_at(double u) const { return interpolate(labels, M, u); }
double MomentField::variance_at(double u) const {
  const double mu = mean_at(u);
  return std::max(0.0, second_moment_at(u) - mu * mu);
}

LinearModel LinearModel::from(const DriftSpec& spec, const DiffusionSpec& diffusion) {
  if (!spec.affine() || spec.dimension() != 1)
    throw CapabilityError("the Gaussian oracle exists only for affine drifts in d = 1");
  const auto s = diffusion.scalar_value();
  if (!s || diffusion.dimension() != 1) throw CapabilityError("the Gaussian oracle needs scalar diffusion in d = 1");
  LinearModel m{*spec.affine(), *s};
  m.validate();
  return m;
}

void LinearModel::validate() const {
  if (!(c.c2 > 0.0) || !(c.c2 - 2.0 * std::max(std::abs(c.c4), std::abs(c.c5)) > 0.0))
    throw DomainError("oracle: need c2 > 0 and c2 - 2 max(|c4|,|c5|) > 0");
  if (!std::isfinite(sigma)) throw DomainError("oracle: sigma must be finite");
}

std::vector<MomentField> integrate_moments(const Graphon& g, const LinearModel& model, const MomentField& initial,
                                           const std::vector<double>& times, double dt) {
  model.validate();
  const auto& c = model.c;
  const double dt_max = 0.1 / (c.c2 + std::abs(c.c4) + std::abs(c.c5));
  if (!(dt > 0.0) || dt > dt_max * (1.0 + 1e-12))
    throw DomainError("integrate_moments: dt must lie in (0, 0.1/(c2+|c4|+|c5|)]");
  check_variance(initial);
  const std::size_t k = initial.size();
  const KernelGrid grid(g, initial.labels);
  const double s2 = model.sigma * model.sigma;

  // state y = (m, M)
  std::vector<double> wm;
  auto rhs = [&](const std::vector<double>& y, std::vector<double>& dy) {
    std::vector<double> m(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(k));
    grid.apply(m, wm);
    dy.resize(2 * k);
    for (std::size_t a = 0; a < k; ++a) {
      const double ma = y[a], Ma = y[k + a], ga = grid.g[a];
      dy[a] = c.c1 - c.c2 * ma + c.c3 * ga + c.c4 * ma * ga + c.c5 * wm[a];
      dy[k + a] = 2.0 * (c.c1 * ma - c.c2 * Ma + c.c3 * ma * ga + c.c4 * Ma * ga + c.c5 * ma * wm[a]) + s2;
    }
  };

  std::vector<double> y(2 * k), k1, k2, k3, k4, tmp(2 * k);
  std::copy(initial.m.begin(), initial.m.end(), y.begin());
  std::copy(initial.M.begin(), initial.M.end(), y.begin() + static_cast<std::ptrdiff_t>(k));
  double t = initial.t;
  std::vector<MomentField> out;
  out.reserve(times.size());
  for (double target : times) {
    if (target < t - 1e-12) throw DomainError("integrate_moments: times must be increasing and >= initial time");
    const double span = target - t;
    const std::size_t steps = span > 0.0 ? static_cast<std::size_t>(std::ceil(span / dt - 1e-9)) : 0;
    const double h = steps ? span / static_cast<double>(steps) : 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      rhs(y, k1);
      for (std::size_t i = 0; i < 2 * k; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
      rhs(tmp, k2);
      for (std::size_t i = 0; i < 2 * k; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
      rhs(tmp, k3);
      for (std::size_t i = 0; i < 2 * k; ++i) tmp[i] = y[i] + h * k3[i];
      rhs(tmp, k4);
      for (std::size_t i = 0; i < 2 * k; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    t = target;
    MomentField f;
    f.t = t;
    f.labels = initial.labels;
    f.m.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(k));
    f.M.assign(y.begin() + static_cast<std::ptrdiff_t>(k), y.end());
    check_variance(f);
    out.push_back(std::move(f));
  }
  return out;
}

StationaryResult solve_stationary(const Graphon& g, const LinearModel& model, std::size_t k, double tol,
                                  std::size_t max_iterations) {
  model.validate();
  const auto& c = model.c;
  StationaryResult res;
  res.field.t = std::numeric_limits<double>::infinity();
  res.field.labels = MomentField::midpoint_grid(k);
  const KernelGrid grid(g, res.field.labels);
  std::vector<double> denom(k);
  for (std::size_t a = 0; a < k; ++a) {
    denom[a] = c.c2 - c.c4 * grid.g[a];
    if (!(denom[a] > 0.0)) throw ConvergenceError("stationary solve: c2 - c4 int G must be positive");
  }

  std::vector<double> m(k, 0.0), next(k), wm;
  std::size_t non_contracting = 0;
  for (;;) {
    grid.apply(m, wm);
    double inc = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      next[a] = (c.c1 + c.c3 * grid.g[a] + c.c5 * wm[a]) / denom[a];
      inc = std::max(inc, std::abs(next[a] - m[a]));
    }
    m.swap(next);
    ++res.iterations;
    if (!std::isfinite(inc)) throw ConvergenceError("stationary solve: iteration diverged");
    if (!res.increments.empty() && res.increments.back() > 0.0 && inc >= res.increments.back()) {
      if (++non_contracting >= 5) throw ConvergenceError("stationary solve: fixed-point map is not contracting");
    } else {
      non_contracting = 0;
    }
    res.increments.push_back(inc);
    if (inc <= tol) break;
    // increments stagnating at rounding level
    if (res.increments.size() > 2 && inc <= 1e-15 * (1.0 + *std::max_element(m.begin(), m.end())) &&
        inc >= res.increments[res.increments.size() - 2])
      break;
    if (res.iterations >= max_iterations) throw ConvergenceError("stationary solve: iteration limit reached");
  }

  grid.apply(m, wm);
  res.field.m = m;
  res.field.M.resize(k);
  for (std::size_t a = 0; a < k; ++a)
    res.field.M[a] =
        (c.c1 * m[a] + c.c3 * m[a] * grid.g[a] + c.c5 * m[a] * wm[a] + 0.5 * model.sigma * model.sigma) / denom[a];
  check_variance(res.field);
  return res;
}

MixtureLaw averaged_law(const MomentField& field) {
  check_variance(field);
  const std::size_t k = field.size();
  std::vector<GaussianComponent> comps;
  std::map<std::pair<double, double>, std::size_t> index;
  const double w = 1.0 / static_cast<double>(k);
  for (std::size_t a = 0; a < k; ++a) {
    const double var = std::max(0.0, field.variance(a));
    const auto key = std::make_pair(field.m[a], var);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, comps.size());
      comps.push_back({w, {field.m[a]}, {var}});
    } else {
      comps[it->second].weight += w;
    }
  }
  double total = 0.0;
  for (const auto& cpt : comps) total += cpt.weight;
  for (auto& cpt : comps) cpt.weight /= total;
  return MixtureLaw(std::move(comps));
}

ContinuityReport label_continuity_check(const MomentField& field, const Graphon& g) {
  ContinuityReport rep;
  std::vector<double> cuts;
  if (g.is_step()) {
    const auto& b = g.step_kernel().boundaries();
    cuts.assign(b.begin() + 1, b.end() - 1);
  }
  for (const auto& iv : g.partition()) {
    if (iv.lo > 0.0) cuts.push_back(iv.lo);
    if (iv.hi < 1.0) cuts.push_back(iv.hi);
  }
  for (std::size_t a = 0; a + 1 < field.size(); ++a) {
    const double du = field.labels[a + 1] - field.labels[a];
    const double w = w2_gaussian_1d(field.m[a], std::sqrt(std::max(0.0, field.variance(a))), field.m[a + 1],
                                    std::sqrt(std::max(0.0, field.variance(a + 1))));
    const double r = w / du;
    rep.ratios.push_back(r);
    rep.max_ratio_all = std::max(rep.max_ratio_all, r);
    const bool straddles = std::any_of(cuts.begin(), cuts.end(), [&](double x) {
      return field.labels[a] < x && x <= field.labels[a + 1];
    });
    if (straddles)
      rep.flagged.push_back(a);
    else
      rep.max_ratio = std::max(rep.max_ratio, r);
  }
  return rep;
}

}  // namespace gmfs
