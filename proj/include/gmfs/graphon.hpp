#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gmfs/matrix.hpp"

namespace gmfs {

/// Closed interval of labels in [0, 1].
struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Piecewise-constant symmetric kernel on [0,1]^2. Blocks are right-open except
/// the last, which is right-closed. Values may be signed so that differences of
/// graphons can be fed to the norm routines.
class StepKernel {
 public:
  StepKernel(std::vector<double> boundaries, Matrix values);

  static StepKernel constant(double value);

  std::size_t blocks() const { return values_.rows(); }
  const std::vector<double>& boundaries() const { return boundaries_; }
  const Matrix& values() const { return values_; }
  double width(std::size_t block) const { return boundaries_[block + 1] - boundaries_[block]; }
  double value(std::size_t a, std::size_t b) const { return values_(a, b); }

  std::size_t block_of(double u) const;
  double eval(double u, double v) const;

  /// Same kernel expressed on a finer partition that contains every boundary.
  StepKernel refined(const std::vector<double>& boundaries) const;

  friend StepKernel operator-(const StepKernel& a, const StepKernel& b);

 private:
  std::vector<double> boundaries_;
  Matrix values_;
};

/// Plain-text grid format: K, then K+1 boundaries, then K rows of K values.
StepKernel read_step_kernel(std::istream& in);
void write_step_kernel(std::ostream& out, const StepKernel& kernel);
StepKernel load_step_kernel(const std::filesystem::path& path);

/// A symmetric kernel G: [0,1]^2 -> [0,1].
class Graphon {
 public:
  using Kernel = std::function<double(double, double)>;

  static Graphon constant(double p);
  static Graphon step(StepKernel kernel);
  /// Symmetry and range are spot-checked on a grid; a callable cannot be proven symmetric.
  static Graphon closed_form(Kernel kernel, std::string descriptor, std::size_t check_grid = 33);

  double eval(double u, double v) const;
  double operator()(double u, double v) const { return eval(u, v); }

  bool is_step() const { return std::holds_alternative<StepKernel>(repr_); }
  const StepKernel& step_kernel() const;

  const std::string& descriptor() const { return descriptor_; }
  /// FNV-1a of the descriptor; identifies the graphon in output headers.
  std::uint64_t hash() const;

  const std::optional<double>& lipschitz_constant() const { return lipschitz_; }
  const std::vector<Interval>& partition() const { return partition_; }
  Graphon& with_lipschitz(double k_g, std::vector<Interval> partition = {});

 private:
  Graphon(std::variant<StepKernel, Kernel> repr, std::string descriptor)
      : repr_(std::move(repr)), descriptor_(std::move(descriptor)) {}

  std::variant<StepKernel, Kernel> repr_;
  std::string descriptor_;
  std::optional<double> lipschitz_;
  std::vector<Interval> partition_;
};

enum class EdgeMode { deterministic, bernoulli };

/// Weights of the form G_n(i/n, j/n) for a step kernel, stored by block.
struct BlockStructure {
  StepKernel kernel;
  std::vector<std::uint32_t> block_of;  // block of label (i+1)/n
};

/// Symmetric n x n interaction weights xi_ij. Particle index i (0-based) carries
/// label (i+1)/n.
class EdgeWeights {
 public:
  static EdgeWeights from_matrix(Matrix values);

  std::size_t n() const { return n_; }
  EdgeMode mode() const { return mode_; }
  std::optional<std::uint64_t> seed() const { return seed_; }

  double operator()(std::size_t i, std::size_t j) const;
  Matrix to_matrix() const;

  const BlockStructure* blocks() const { return blocks_ ? &*blocks_ : nullptr; }
  const Matrix* dense() const { return dense_ ? &*dense_ : nullptr; }
  const std::vector<std::uint8_t>* bits() const { return bits_ ? &*bits_ : nullptr; }

  bool operator==(const EdgeWeights& other) const;

 private:
  friend EdgeWeights sample_edges(const Graphon&, std::size_t, EdgeMode, std::uint64_t);
  EdgeWeights() = default;

  std::size_t n_ = 0;
  EdgeMode mode_ = EdgeMode::deterministic;
  std::optional<std::uint64_t> seed_;
  std::optional<BlockStructure> blocks_;
  std::optional<Matrix> dense_;
  std::optional<std::vector<std::uint8_t>> bits_;
};

/// Deterministic: xi_ij = G(i/n, j/n). Bernoulli: upper triangle (diagonal
/// included) drawn independently, mirrored; a pure function of (g, n, seed).
EdgeWeights sample_edges(const Graphon& g, std::size_t n, EdgeMode mode, std::uint64_t seed = 0);

struct CutNormResult {
  double value = 0.0;
  bool exact = true;  // false: lower bound from a randomized search
  std::vector<std::size_t> rows;  // maximizing S as block indices
  std::vector<std::size_t> cols;  // maximizing T as block indices
};

struct CutNormOptions {
  enum class Mode { automatic, exact, lower_bound } mode = Mode::automatic;
  std::size_t max_exact_blocks = 20;
  std::size_t samples = 4096;
  std::uint64_t seed = 1;
  std::size_t discretization = 128;  // cells used for closed-form kernels
};

CutNormResult cut_norm(const StepKernel& kernel, const CutNormOptions& options = {});
CutNormResult cut_norm(const Graphon& g, const CutNormOptions& options = {});

struct OperatorNormResult {
  double value = 0.0;
  std::vector<int> signs;  // maximizing phi, +1/-1 per block
};

/// sup over |phi| <= 1 of int |int G(u,v) phi(v) dv| du, exact for K <= 20.
OperatorNormResult l_infty_to_l1_norm(const StepKernel& kernel, std::size_t max_blocks = 20);

struct LipschitzReport {
  bool certified = true;
  double declared = 0.0;
  double observed = 0.0;  // max difference quotient on the grid
  struct Violation {
    double u1, v1, u2, v2, ratio;
  };
  std::optional<Violation> violation;
};

/// Grid estimate of the per-cell Lipschitz constant. An empty partition means
/// the single cell [0,1].
LipschitzReport check_lipschitz(const Graphon& g, double declared_k_g,
                                const std::vector<Interval>& partition = {}, double tol = 1e-9,
                                std::size_t grid = 256);

}  // namespace gmfs
