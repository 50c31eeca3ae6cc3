#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmfs/dynamics.hpp"
#include "gmfs/graphon.hpp"

namespace gmfs {

/// Per-label initial law mu_u(0): a point mass or a Gaussian whose mean and
/// variance may depend on the label u. Applied independently per coordinate.
struct InitialLaw {
  enum class Kind { point, gaussian };
  Kind kind = Kind::gaussian;
  std::function<double(double)> mean = [](double) { return 0.0; };
  std::function<double(double)> variance = [](double) { return 1.0; };
  std::string descriptor = "gaussian(0,1)";

  static InitialLaw point(double value);
  static InitialLaw gaussian(double mean, double variance);
  static InitialLaw gaussian_by_label(std::function<double(double)> mean, std::function<double(double)> variance,
                                      std::string descriptor);

  double sample(double label, std::uint64_t key, std::uint64_t particle, std::uint64_t coord) const;
};

/// Counter-based Brownian path shared by coupled schemes. Draws exist only at the
/// finest level; an increment at level m is the pairwise sum of its two level
/// m+1 halves, so coarse and fine schemes see one underlying path exactly.
class BrownianPath {
 public:
  BrownianPath(std::uint64_t seed, std::uint64_t path_id, double base_step, int levels = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t path_id() const { return path_id_; }
  double base_step() const { return base_step_; }
  int levels() const { return levels_; }
  double step(int level) const;

  /// Increment of coordinate `coord` of particle `particle` over step `step_index` at `level`.
  double increment(std::size_t particle, std::size_t coord, std::uint64_t step_index, int level) const;
  /// All n*d increments for one step, row-major by particle.
  void increments(std::uint64_t step_index, int level, std::size_t n, std::size_t d, std::span<double> out) const;

 private:
  std::uint64_t seed_;
  std::uint64_t path_id_;
  double base_step_;
  int levels_;
  std::uint64_t key_;
};

/// n particles in R^d at time t. Particle i (0-based) carries label (i+1)/n.
struct ParticleState {
  double t = 0.0;
  std::uint64_t step = 0;  // steps taken at the integration level
  std::size_t n = 0;
  std::size_t d = 1;
  std::vector<double> x;  // n*d, row-major
  std::shared_ptr<const EdgeWeights> edges;

  double label(std::size_t i) const { return static_cast<double>(i + 1) / static_cast<double>(n); }
  std::span<const double> position(std::size_t i) const { return {x.data() + i * d, d}; }
};

ParticleState make_state(std::shared_ptr<const EdgeWeights> edges, std::size_t d, const InitialLaw& law,
                         std::uint64_t seed, std::uint64_t replica);

enum class DriftPath { automatic, generic, affine };

/// D_i = f(x_i) + (1/n) sum_j xi_ij b(x_i, x_j). The affine path needs affine
/// coefficients; with step-kernel edges it costs O(n + K^2), otherwise a plain
/// O(n^2) matrix-vector product.
std::vector<double> drift_eval(const ParticleState& state, const DriftSpec& spec,
                               DriftPath path = DriftPath::automatic);

struct IntegratorConfig {
  double step = 0.01;
  double horizon = 0.0;
  std::vector<double> snapshot_times;  // empty: {horizon}
  BrownianPath path{0, 0, 0.01, 0};
  int level = 0;                        // path level the scheme runs on
  std::optional<double> stability_cap;  // default: default_stability_cap(spec)

  /// Uncoupled run on its own path.
  static IntegratorConfig fresh(double step, double horizon, std::vector<double> snapshots, std::uint64_t seed,
                                std::uint64_t path_id = 0);

  double cap(const DriftSpec& spec) const { return stability_cap.value_or(default_stability_cap(spec)); }
  void validate(const DriftSpec& spec) const;
  /// Snapshot step indices on this scheme's grid.
  std::vector<std::uint64_t> snapshot_steps() const;
};

/// One Euler-Maruyama step: drift frozen at the current grid point.
ParticleState step_euler(const ParticleState& state, const DriftSpec& spec, const DiffusionSpec& diffusion, double h,
                         const BrownianPath& path, int level);

struct Snapshot {
  double t = 0.0;
  ParticleState state;
};

std::vector<Snapshot> integrate(ParticleState state0, const DriftSpec& spec, const DiffusionSpec& diffusion,
                                const IntegratorConfig& config);

enum class EdgePolicy { quenched, annealed };

struct EnsembleConfig {
  std::size_t n = 100;
  std::size_t replicas = 1;
  EdgePolicy policy = EdgePolicy::quenched;
  EdgeMode edge_mode = EdgeMode::deterministic;
  double step = 0.01;
  double horizon = 1.0;
  std::vector<double> snapshot_times;
  double base_step = 0.0;  // 0: same as step
  int path_levels = 0;
  int level = 0;
  std::optional<double> stability_cap;
  std::uint64_t base_seed = 1;
  std::uint64_t replica_offset = 0;  // global replica index of replica 0
  std::uint64_t quenched_draw = 0;   // which edge draw a quenched ensemble shares
  InitialLaw initial;
};

struct Ensemble {
  std::vector<std::vector<Snapshot>> runs;  // runs[r][s]
  std::vector<std::shared_ptr<const EdgeWeights>> edges;
};

/// Seed of edge draw `index`: annealed replicas use their global index, quenched
/// ensembles the configured draw (so one replica of either policy coincides).
std::uint64_t edge_seed(std::uint64_t base_seed, std::uint64_t index);

/// Replica r is a pure function of (base_seed, replica_offset + r).
Ensemble ensemble_run(const DriftSpec& spec, const DiffusionSpec& diffusion, const Graphon& g,
                      const EnsembleConfig& config);

}  // namespace gmfs
