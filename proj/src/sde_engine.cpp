#include "gmfs/sde_engine.hpp"

#include <algorithm>
#include <cmath>

#include "gmfs/errors.hpp"
#include "gmfs/parallel.hpp"
#include "gmfs/rng.hpp"

namespace gmfs {

// ---------------------------------------------------------------------------
// InitialLaw

InitialLaw InitialLaw::point(double value) {
  InitialLaw law;
  law.kind = Kind::point;
  law.mean = [value](double) { return value; };
  law.variance = [](double) { return 0.0; };
  law.descriptor = "point(" + std::to_string(value) + ")";
  return law;
}

InitialLaw InitialLaw::gaussian(double mean, double variance) {
  if (!(variance >= 0.0)) throw DomainError("initial variance must be non-negative");
  InitialLaw law;
  law.kind = Kind::gaussian;
  law.mean = [mean](double) { return mean; };
  law.variance = [variance](double) { return variance; };
  law.descriptor = "gaussian(" + std::to_string(mean) + "," + std::to_string(variance) + ")";
  return law;
}

InitialLaw InitialLaw::gaussian_by_label(std::function<double(double)> mean, std::function<double(double)> variance,
                                         std::string descriptor) {
  InitialLaw law;
  law.kind = Kind::gaussian;
  law.mean = std::move(mean);
  law.variance = std::move(variance);
  law.descriptor = std::move(descriptor);
  return law;
}

double InitialLaw::sample(double label, std::uint64_t key, std::uint64_t particle, std::uint64_t coord) const {
  const double m = mean(label);
  if (kind == Kind::point) return m;
  const double v = variance(label);
  if (v == 0.0) return m;
  return m + std::sqrt(v) * rng::normal(key, particle, coord);
}

// ---------------------------------------------------------------------------
// BrownianPath

BrownianPath::BrownianPath(std::uint64_t seed, std::uint64_t path_id, double base_step, int levels)
    : seed_(seed), path_id_(path_id), base_step_(base_step), levels_(levels) {
  if (!(base_step > 0.0)) throw DomainError("Brownian base step must be positive");
  if (levels < 0 || levels > 30) throw DomainError("Brownian refinement levels must lie in [0, 30]");
  key_ = rng::derive_key(seed, rng::Stream::brownian, path_id, static_cast<std::uint64_t>(levels));
}

double BrownianPath::step(int level) const { return std::ldexp(base_step_, -level); }

double BrownianPath::increment(std::size_t particle, std::size_t coord, std::uint64_t step_index, int level) const {
  if (level < 0 || level > levels_) throw DomainError("Brownian level out of range");
  const double scale = std::sqrt(step(levels_));
  // Distinct (particle, coord) pairs map to distinct counters for d < 2^16.
  const std::uint64_t lane = (static_cast<std::uint64_t>(particle) << 16) | coord;
  const std::size_t width = std::size_t{1} << (levels_ - level);
  std::vector<double> buf(width);
  const std::uint64_t first = step_index * width;
  for (std::size_t j = 0; j < width; ++j) buf[j] = scale * rng::normal(key_, lane, first + j);
  for (std::size_t w = width; w > 1; w /= 2)
    for (std::size_t j = 0; j < w / 2; ++j) buf[j] = buf[2 * j] + buf[2 * j + 1];
  return buf[0];
}

void BrownianPath::increments(std::uint64_t step_index, int level, std::size_t n, std::size_t d,
                              std::span<double> out) const {
  if (level < 0 || level > levels_) throw DomainError("Brownian level out of range");
  const double scale = std::sqrt(step(levels_));
  const std::size_t width = std::size_t{1} << (levels_ - level);
  const std::uint64_t first = step_index * width;
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> buf(width);
    for (std::size_t c = 0; c < d; ++c) {
      const std::uint64_t lane = (static_cast<std::uint64_t>(i) << 16) | c;
      for (std::size_t j = 0; j < width; ++j) buf[j] = scale * rng::normal(key_, lane, first + j);
      for (std::size_t w = width; w > 1; w /= 2)
        for (std::size_t j = 0; j < w / 2; ++j) buf[j] = buf[2 * j] + buf[2 * j + 1];
      out[i * d + c] = buf[0];
    }
  });
}

// ---------------------------------------------------------------------------
// State and drift

ParticleState make_state(std::shared_ptr<const EdgeWeights> edges, std::size_t d, const InitialLaw& law,
                         std::uint64_t seed, std::uint64_t replica) {
  if (!edges) throw DomainError("particle state needs edge weights");
  ParticleState s;
  s.n = edges->n();
  s.d = d;
  s.edges = std::move(edges);
  s.x.resize(s.n * d);
  const std::uint64_t key = rng::derive_key(seed, rng::Stream::initial, replica);
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t c = 0; c < d; ++c) s.x[i * d + c] = law.sample(s.label(i), key, i, c);
  return s;
}

namespace {

std::vector<double> drift_generic(const ParticleState& s, const DriftSpec& spec) {
  const std::size_t n = s.n, d = s.d;
  const EdgeWeights& xi = *s.edges;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> out(n * d);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> acc(d, 0.0), tmp(d);
    const auto xi_pos = s.position(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double w = xi(i, j);
      if (w == 0.0) continue;
      spec.b(xi_pos, s.position(j), tmp);
      for (std::size_t c = 0; c < d; ++c) acc[c] += w * tmp[c];
    }
    spec.f(xi_pos, tmp);
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = tmp[c] + inv_n * acc[c];
  });
  return out;
}

std::vector<double> drift_affine(const ParticleState& s, const AffineCoefficients& a) {
  const std::size_t n = s.n, d = s.d;
  const EdgeWeights& xi = *s.edges;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> out(n * d);

  if (const BlockStructure* bs = xi.blocks()) {
    // Per-block aggregates: count and coordinate sums of the particles in each block.
    const std::size_t k = bs->kernel.blocks();
    std::vector<double> count(k, 0.0), sum(k * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t b = bs->block_of[i];
      count[b] += 1.0;
      for (std::size_t c = 0; c < d; ++c) sum[b * d + c] += s.x[i * d + c];
    }
    std::vector<double> row_s(k, 0.0), row_t(k * d, 0.0);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t q = 0; q < k; ++q) {
        const double v = bs->kernel.value(p, q);
        row_s[p] += v * count[q];
        for (std::size_t c = 0; c < d; ++c) row_t[p * d + c] += v * sum[q * d + c];
      }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = bs->block_of[i];
      for (std::size_t c = 0; c < d; ++c) {
        const double x = s.x[i * d + c];
        out[i * d + c] = a.c1 - a.c2 * x + inv_n * (row_s[p] * (a.c3 + a.c4 * x) + a.c5 * row_t[p * d + c]);
      }
    }
    return out;
  }

  parallel_for(n, [&](std::size_t i) {
    double row_s = 0.0;
    std::vector<double> row_t(d, 0.0);
    if (const auto* bits = xi.bits()) {
      const std::uint8_t* r = bits->data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        if (!r[j]) continue;
        row_s += 1.0;
        for (std::size_t c = 0; c < d; ++c) row_t[c] += s.x[j * d + c];
      }
    } else {
      const auto r = xi.dense()->row(i);
      for (std::size_t j = 0; j < n; ++j) {
        row_s += r[j];
        for (std::size_t c = 0; c < d; ++c) row_t[c] += r[j] * s.x[j * d + c];
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      const double x = s.x[i * d + c];
      out[i * d + c] = a.c1 - a.c2 * x + inv_n * (row_s * (a.c3 + a.c4 * x) + a.c5 * row_t[c]);
    }
  });
  return out;
}

}  // namespace

std::vector<double> drift_eval(const ParticleState& state, const DriftSpec& spec, DriftPath path) {
  if (!state.edges || state.edges->n() != state.n) throw DomainError("state edges do not match particle count");
  if (state.d != spec.dimension()) throw DomainError("state dimension does not match drift dimension");
  if (path == DriftPath::generic) return drift_generic(state, spec);
  if (path == DriftPath::affine && !spec.affine()) throw CapabilityError("affine drift path needs affine coefficients");
  if (spec.affine()) return drift_affine(state, *spec.affine());
  return drift_generic(state, spec);
}

// ---------------------------------------------------------------------------
// Integration

IntegratorConfig IntegratorConfig::fresh(double step, double horizon, std::vector<double> snapshots,
                                         std::uint64_t seed, std::uint64_t path_id) {
  IntegratorConfig c;
  c.step = step;
  c.horizon = horizon;
  c.snapshot_times = std::move(snapshots);
  c.path = BrownianPath(seed, path_id, step, 0);
  c.level = 0;
  return c;
}

namespace {

std::uint64_t grid_index(double t, double h, const char* what) {
  const double k = std::round(t / h);
  if (std::abs(k * h - t) > 1e-9 * std::max(1.0, std::abs(t)))
    throw DomainError(std::string(what) + " is not on the step grid");
  return static_cast<std::uint64_t>(k);
}

}  // namespace

void IntegratorConfig::validate(const DriftSpec& spec) const {
  if (!(step > 0.0)) throw DomainError("integration step must be positive");
  if (!(horizon >= 0.0)) throw DomainError("horizon must be non-negative");
  if (level < 0 || level > path.levels()) throw DomainError("scheme level outside the Brownian path levels");
  if (std::abs(path.step(level) - step) > 1e-12 * step) throw DomainError("step does not match the Brownian path level");
  const double h0 = cap(spec);
  if (step > h0 * (1 + 1e-12))
    throw DomainError("step " + std::to_string(step) + " exceeds the stability cap " + std::to_string(h0));
  grid_index(horizon, step, "horizon");
  for (std::size_t s = 0; s < snapshot_times.size(); ++s) {
    const double t = snapshot_times[s];
    if (!(t >= 0.0 && t <= horizon * (1 + 1e-12))) throw DomainError("snapshot time outside [0, T]");
    if (s && !(t > snapshot_times[s - 1])) throw DomainError("snapshot times must increase");
    grid_index(t, step, "snapshot time");
  }
}

std::vector<std::uint64_t> IntegratorConfig::snapshot_steps() const {
  std::vector<std::uint64_t> out;
  if (snapshot_times.empty()) {
    out.push_back(grid_index(horizon, step, "horizon"));
    return out;
  }
  for (double t : snapshot_times) out.push_back(grid_index(t, step, "snapshot time"));
  return out;
}

ParticleState step_euler(const ParticleState& state, const DriftSpec& spec, const DiffusionSpec& diffusion, double h,
                         const BrownianPath& path, int level) {
  if (!(h > 0.0)) throw DomainError("Euler step must be positive");
  if (std::abs(path.step(level) - h) > 1e-12 * h) throw DomainError("step does not match the Brownian path level");
  if (diffusion.dimension() != state.d) throw DomainError("diffusion dimension does not match state");
  const std::size_t n = state.n, d = state.d;
  const std::vector<double> drift = drift_eval(state, spec);
  std::vector<double> dw(n * d);
  path.increments(state.step, level, n, d, dw);

  ParticleState next;
  next.n = n;
  next.d = d;
  next.edges = state.edges;
  next.step = state.step + 1;
  next.t = static_cast<double>(next.step) * h;
  next.x.resize(n * d);
  const Matrix& sigma = diffusion.sigma();
  const auto scalar = diffusion.scalar_value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      double noise;
      if (scalar) {
        noise = *scalar * dw[i * d + c];
      } else {
        noise = 0.0;
        for (std::size_t k = 0; k < d; ++k) noise += sigma(c, k) * dw[i * d + k];
      }
      const double v = state.x[i * d + c] + drift[i * d + c] * h + noise;
      if (!std::isfinite(v)) throw IntegrationBlowup(i, next.t);
      next.x[i * d + c] = v;
    }
  return next;
}

std::vector<Snapshot> integrate(ParticleState state0, const DriftSpec& spec, const DiffusionSpec& diffusion,
                                const IntegratorConfig& config) {
  config.validate(spec);
  for (double v : state0.x)
    if (!std::isfinite(v)) throw IntegrationBlowup(0, state0.t);
  const std::vector<std::uint64_t> wanted = config.snapshot_steps();
  const std::uint64_t total = grid_index(config.horizon, config.step, "horizon");
  state0.step = 0;
  state0.t = 0.0;

  std::vector<Snapshot> out;
  out.reserve(wanted.size());
  std::size_t next_snapshot = 0;
  ParticleState s = std::move(state0);
  for (std::uint64_t k = 0;; ++k) {
    while (next_snapshot < wanted.size() && wanted[next_snapshot] == k) {
      out.push_back({static_cast<double>(k) * config.step, s});
      ++next_snapshot;
    }
    if (k == total) break;
    s = step_euler(s, spec, diffusion, config.step, config.path, config.level);
  }
  return out;
}

std::uint64_t edge_seed(std::uint64_t base_seed, std::uint64_t index) {
  return rng::derive_key(base_seed, rng::Stream::edges, index);
}

Ensemble ensemble_run(const DriftSpec& spec, const DiffusionSpec& diffusion, const Graphon& g,
                      const EnsembleConfig& config) {
  if (config.replicas == 0) throw DomainError("ensemble needs at least one replica");
  const double base = config.base_step > 0.0 ? config.base_step : config.step;
  Ensemble e;
  e.runs.resize(config.replicas);
  e.edges.resize(config.replicas);

  std::shared_ptr<const EdgeWeights> shared;
  if (config.policy == EdgePolicy::quenched)
    shared = std::make_shared<const EdgeWeights>(
        sample_edges(g, config.n, config.edge_mode, edge_seed(config.base_seed, config.quenched_draw)));

  parallel_for(config.replicas, [&](std::size_t r) {
    const std::uint64_t global = config.replica_offset + r;
    auto edges = shared ? shared
                        : std::make_shared<const EdgeWeights>(sample_edges(
                              g, config.n, config.edge_mode, edge_seed(config.base_seed, global)));
    IntegratorConfig ic;
    ic.step = config.step;
    ic.horizon = config.horizon;
    ic.snapshot_times = config.snapshot_times;
    ic.path = BrownianPath(config.base_seed, global, base, config.path_levels);
    ic.level = config.level;
    ic.stability_cap = config.stability_cap;
    ParticleState s0 = make_state(edges, spec.dimension(), config.initial, config.base_seed, global);
    e.runs[r] = integrate(std::move(s0), spec, diffusion, ic);
    e.edges[r] = std::move(edges);
  });
  return e;
}

}  // namespace gmfs
