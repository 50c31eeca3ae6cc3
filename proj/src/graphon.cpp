#include "gmfs/graphon.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gmfs/errors.hpp"
#include "gmfs/parallel.hpp"
#include "gmfs/rng.hpp"

namespace gmfs {

namespace {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string describe(const StepKernel& k) {
  std::ostringstream os;
  write_step_kernel(os, k);
  return "step\n" + os.str();
}

void check_label(double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("graphon label outside [0,1]: " + format_double(u));
}

}  // namespace

// ---------------------------------------------------------------------------
// StepKernel

StepKernel::StepKernel(std::vector<double> boundaries, Matrix values)
    : boundaries_(std::move(boundaries)), values_(std::move(values)) {
  const std::size_t k = values_.rows();
  if (k == 0 || values_.cols() != k) throw DomainError("step kernel needs a non-empty square block matrix");
  if (boundaries_.size() != k + 1) throw DomainError("step kernel needs K+1 boundaries");
  if (boundaries_.front() != 0.0 || boundaries_.back() != 1.0)
    throw DomainError("step kernel boundaries must start at 0 and end at 1");
  for (std::size_t b = 0; b < k; ++b)
    if (!(boundaries_[b] < boundaries_[b + 1])) throw DomainError("step kernel boundaries must increase strictly");
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (!std::isfinite(values_(a, b))) throw DomainError("step kernel value is not finite");
      if (values_(a, b) != values_(b, a)) throw DomainError("step kernel block matrix is not symmetric");
    }
}

StepKernel StepKernel::constant(double value) { return StepKernel({0.0, 1.0}, Matrix(1, 1, value)); }

std::size_t StepKernel::block_of(double u) const {
  const auto first = boundaries_.begin() + 1;
  const auto last = boundaries_.end() - 1;
  return static_cast<std::size_t>(std::upper_bound(first, last, u) - first);
}

double StepKernel::eval(double u, double v) const {
  check_label(u);
  check_label(v);
  return values_(block_of(u), block_of(v));
}

StepKernel StepKernel::refined(const std::vector<double>& boundaries) const {
  for (double b : boundaries_)
    if (!std::binary_search(boundaries.begin(), boundaries.end(), b))
      throw DomainError("refinement does not contain every boundary of the kernel");
  const std::size_t k = boundaries.size() - 1;
  std::vector<std::size_t> owner(k);
  for (std::size_t a = 0; a < k; ++a) owner[a] = block_of(boundaries[a]);
  Matrix values(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) values(a, b) = values_(owner[a], owner[b]);
  return StepKernel(boundaries, std::move(values));
}

StepKernel operator-(const StepKernel& a, const StepKernel& b) {
  std::vector<double> merged = a.boundaries();
  merged.insert(merged.end(), b.boundaries().begin(), b.boundaries().end());
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  const StepKernel ra = a.refined(merged);
  const StepKernel rb = b.refined(merged);
  Matrix diff = ra.values();
  for (std::size_t i = 0; i < diff.data().size(); ++i) diff.data()[i] -= rb.values().data()[i];
  return StepKernel(std::move(merged), std::move(diff));
}

StepKernel read_step_kernel(std::istream& in) {
  std::size_t k = 0;
  if (!(in >> k) || k == 0) throw DomainError("step kernel file: expected block count K >= 1");
  std::vector<double> boundaries(k + 1);
  for (auto& b : boundaries)
    if (!(in >> b)) throw DomainError("step kernel file: expected K+1 boundaries");
  Matrix values(k, k);
  for (auto& v : values.data())
    if (!(in >> v)) throw DomainError("step kernel file: expected K*K values");
  return StepKernel(std::move(boundaries), std::move(values));
}

void write_step_kernel(std::ostream& out, const StepKernel& kernel) {
  const std::size_t k = kernel.blocks();
  out << k << '\n';
  for (std::size_t b = 0; b <= k; ++b) out << (b ? " " : "") << format_double(kernel.boundaries()[b]);
  out << '\n';
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) out << (b ? " " : "") << format_double(kernel.value(a, b));
    out << '\n';
  }
}

StepKernel load_step_kernel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open step kernel file " + path.string());
  return read_step_kernel(in);
}

// ---------------------------------------------------------------------------
// Graphon

Graphon Graphon::constant(double p) { return step(StepKernel::constant(p)); }

Graphon Graphon::step(StepKernel kernel) {
  for (double v : kernel.values().data())
    if (v < 0.0 || v > 1.0) throw DomainError("graphon values must lie in [0,1]");
  std::string d = describe(kernel);
  return Graphon(std::move(kernel), std::move(d));
}

Graphon Graphon::closed_form(Kernel kernel, std::string descriptor, std::size_t check_grid) {
  if (!kernel) throw DomainError("closed-form graphon needs a kernel");
  const std::size_t m = std::max<std::size_t>(check_grid, 2);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b <= a; ++b) {
      const double u = static_cast<double>(a) / static_cast<double>(m - 1);
      const double v = static_cast<double>(b) / static_cast<double>(m - 1);
      const double guv = kernel(u, v);
      const double gvu = kernel(v, u);
      if (!(guv >= 0.0 && guv <= 1.0)) throw DomainError("closed-form graphon leaves [0,1] at a grid point");
      if (std::abs(guv - gvu) > 1e-12) throw DomainError("closed-form graphon is not symmetric on the check grid");
    }
  return Graphon(std::move(kernel), "closed_form:" + descriptor);
}

double Graphon::eval(double u, double v) const {
  check_label(u);
  check_label(v);
  if (const auto* k = std::get_if<StepKernel>(&repr_)) return k->values()(k->block_of(u), k->block_of(v));
  return std::get<Kernel>(repr_)(u, v);
}

const StepKernel& Graphon::step_kernel() const {
  if (const auto* k = std::get_if<StepKernel>(&repr_)) return *k;
  throw CapabilityError("graphon is not a step kernel");
}

std::uint64_t Graphon::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : descriptor_) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Graphon& Graphon::with_lipschitz(double k_g, std::vector<Interval> partition) {
  if (!(k_g >= 0.0)) throw DomainError("Lipschitz constant must be non-negative");
  lipschitz_ = k_g;
  partition_ = std::move(partition);
  return *this;
}

// ---------------------------------------------------------------------------
// EdgeWeights

EdgeWeights EdgeWeights::from_matrix(Matrix values) {
  if (values.rows() != values.cols()) throw DomainError("edge weights must be square");
  for (std::size_t i = 0; i < values.rows(); ++i)
    for (std::size_t j = 0; j < values.cols(); ++j) {
      const double v = values(i, j);
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("edge weights must lie in [0,1]");
      if (v != values(j, i)) throw DomainError("edge weights must be symmetric");
    }
  EdgeWeights w;
  w.n_ = values.rows();
  w.mode_ = EdgeMode::deterministic;
  w.dense_ = std::move(values);
  return w;
}

double EdgeWeights::operator()(std::size_t i, std::size_t j) const {
  if (blocks_) return blocks_->kernel.value(blocks_->block_of[i], blocks_->block_of[j]);
  if (dense_) return (*dense_)(i, j);
  return static_cast<double>((*bits_)[i * n_ + j]);
}

Matrix EdgeWeights::to_matrix() const {
  Matrix m(n_, n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) m(i, j) = (*this)(i, j);
  return m;
}

bool EdgeWeights::operator==(const EdgeWeights& other) const {
  if (n_ != other.n_ || mode_ != other.mode_) return false;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j)
      if ((*this)(i, j) != other(i, j)) return false;
  return true;
}

EdgeWeights sample_edges(const Graphon& g, std::size_t n, EdgeMode mode, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample_edges needs n >= 1");
  EdgeWeights w;
  w.n_ = n;
  w.mode_ = mode;
  const auto label = [n](std::size_t i) { return static_cast<double>(i + 1) / static_cast<double>(n); };

  if (mode == EdgeMode::deterministic) {
    if (g.is_step()) {
      BlockStructure bs{g.step_kernel(), std::vector<std::uint32_t>(n)};
      for (std::size_t i = 0; i < n; ++i) bs.block_of[i] = static_cast<std::uint32_t>(bs.kernel.block_of(label(i)));
      w.blocks_ = std::move(bs);
    } else {
      Matrix m(n, n);
      parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = i; j < n; ++j) {
          const double v = g.eval(label(i), label(j));
          m(i, j) = v;
          m(j, i) = v;
        }
      });
      w.dense_ = std::move(m);
    }
    return w;
  }

  w.seed_ = seed;
  const std::uint64_t key = rng::derive_key(seed, rng::Stream::edges);
  std::vector<std::uint8_t> bits(n * n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i; j < n; ++j) {
      const double p = g.eval(label(i), label(j));
      const std::uint8_t x = rng::uniform(key, i, j) < p ? 1 : 0;
      bits[i * n + j] = x;
      bits[j * n + i] = x;
    }
  });
  w.bits_ = std::move(bits);
  return w;
}

// ---------------------------------------------------------------------------
// Norms

namespace {

// Integral of the kernel over (union of rows) x (union of cols).
double block_integral(const StepKernel& k, const std::vector<std::size_t>& rows,
                      const std::vector<std::size_t>& cols) {
  double s = 0.0;
  for (std::size_t a : rows)
    for (std::size_t b : cols) s += k.width(a) * k.width(b) * k.value(a, b);
  return s;
}

std::vector<std::size_t> mask_to_blocks(std::uint64_t mask, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < k; ++b)
    if (mask >> b & 1u) out.push_back(b);
  return out;
}

// Best T for a fixed vector of column contributions c_j: all positive or all negative.
std::pair<double, std::uint64_t> best_cols(const std::vector<double>& c) {
  double pos = 0.0, neg = 0.0;
  std::uint64_t pmask = 0, nmask = 0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (c[j] > 0.0) {
      pos += c[j];
      pmask |= 1ull << j;
    } else if (c[j] < 0.0) {
      neg -= c[j];
      nmask |= 1ull << j;
    }
  }
  return pos >= neg ? std::pair{pos, pmask} : std::pair{neg, nmask};
}

CutNormResult cut_norm_exact(const StepKernel& k) {
  const std::size_t nb = k.blocks();
  Matrix a(nb, nb);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) a(i, j) = k.width(i) * k.width(j) * k.value(i, j);

  std::vector<double> c(nb, 0.0);
  double best = -1.0;
  std::uint64_t best_rows = 0, best_cols_mask = 0;
  const std::uint64_t total = 1ull << nb;
  std::uint64_t gray = 0;
  for (std::uint64_t s = 1; s < total; ++s) {
    const auto flip = static_cast<std::size_t>(std::countr_zero(s));
    gray ^= 1ull << flip;
    const double sign = (gray >> flip & 1u) ? 1.0 : -1.0;
    for (std::size_t j = 0; j < nb; ++j) c[j] += sign * a(flip, j);
    const auto [value, cols] = best_cols(c);
    if (value > best) {
      best = value;
      best_rows = gray;
      best_cols_mask = cols;
    }
  }
  CutNormResult r;
  r.exact = true;
  r.rows = mask_to_blocks(best_rows, nb);
  r.cols = mask_to_blocks(best_cols_mask, nb);
  r.value = std::abs(block_integral(k, r.rows, r.cols));
  return r;
}

CutNormResult cut_norm_search(const StepKernel& k, std::size_t samples, std::uint64_t seed) {
  const std::size_t nb = k.blocks();
  Matrix a(nb, nb);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) a(i, j) = k.width(i) * k.width(j) * k.value(i, j);
  rng::KeyedStream stream(rng::derive_key(seed, rng::Stream::misc, 0xC07));

  auto best_given = [&](const std::vector<char>& fixed, std::vector<char>& other) {
    std::vector<double> c(nb, 0.0);
    for (std::size_t i = 0; i < nb; ++i)
      if (fixed[i])
        for (std::size_t j = 0; j < nb; ++j) c[j] += a(i, j);
    double pos = 0.0, neg = 0.0;
    for (double x : c) (x > 0 ? pos : neg) += x;
    const bool take_pos = pos >= -neg;
    for (std::size_t j = 0; j < nb; ++j) other[j] = take_pos ? c[j] > 0.0 : c[j] < 0.0;
    return take_pos ? pos : -neg;
  };

  CutNormResult r;
  r.exact = false;
  double best = -1.0;
  std::vector<char> rows(nb), cols(nb);
  for (std::size_t s = 0; s < samples; ++s) {
    for (auto& x : rows) x = stream.uniform() < 0.5;
    double value = best_given(rows, cols);
    for (int iter = 0; iter < 50; ++iter) {
      const double v1 = best_given(cols, rows);  // kernel symmetric: roles swap
      const double v2 = best_given(rows, cols);
      if (std::max(v1, v2) <= value * (1 + 1e-15)) break;
      value = std::max(v1, v2);
    }
    if (value > best) {
      best = value;
      r.rows.clear();
      r.cols.clear();
      for (std::size_t i = 0; i < nb; ++i) {
        if (rows[i]) r.rows.push_back(i);
        if (cols[i]) r.cols.push_back(i);
      }
    }
  }
  r.value = std::abs(block_integral(k, r.rows, r.cols));
  return r;
}

}  // namespace

CutNormResult cut_norm(const StepKernel& kernel, const CutNormOptions& options) {
  using Mode = CutNormOptions::Mode;
  const bool small = kernel.blocks() <= options.max_exact_blocks && kernel.blocks() <= 62;
  if (options.mode == Mode::exact && !small)
    throw CapabilityError("exact cut norm supports at most " + std::to_string(options.max_exact_blocks) + " blocks");
  if (options.mode == Mode::lower_bound || !small) return cut_norm_search(kernel, options.samples, options.seed);
  return cut_norm_exact(kernel);
}

CutNormResult cut_norm(const Graphon& g, const CutNormOptions& options) {
  if (g.is_step()) return cut_norm(g.step_kernel(), options);
  if (options.mode == CutNormOptions::Mode::exact)
    throw CapabilityError("exact cut norm needs a step kernel");
  const std::size_t m = std::max<std::size_t>(options.discretization, 1);
  std::vector<double> bounds(m + 1);
  for (std::size_t i = 0; i <= m; ++i) bounds[i] = static_cast<double>(i) / static_cast<double>(m);
  bounds.back() = 1.0;
  Matrix values(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = g.eval(0.5 * (bounds[i] + bounds[i + 1]), 0.5 * (bounds[j] + bounds[j + 1]));
      values(i, j) = v;
      values(j, i) = v;
    }
  return cut_norm_search(StepKernel(std::move(bounds), std::move(values)), options.samples, options.seed);
}

OperatorNormResult l_infty_to_l1_norm(const StepKernel& kernel, std::size_t max_blocks) {
  const std::size_t nb = kernel.blocks();
  if (nb > max_blocks || nb > 62)
    throw CapabilityError("infinity-to-one norm supports at most " + std::to_string(max_blocks) + " blocks");
  Matrix a(nb, nb);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) a(i, j) = kernel.value(i, j) * kernel.width(j);

  auto objective = [&](const std::vector<double>& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < nb; ++i) s += kernel.width(i) * std::abs(r[i]);
    return s;
  };

  std::vector<int> phi(nb, 1);
  std::vector<double> r(nb, 0.0);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) r[i] += a(i, j);
  double best = objective(r);
  std::vector<int> best_phi = phi;
  // phi_0 = +1 fixed: the objective is invariant under phi -> -phi.
  const std::uint64_t total = nb > 1 ? 1ull << (nb - 1) : 1;
  for (std::uint64_t s = 1; s < total; ++s) {
    const auto flip = static_cast<std::size_t>(std::countr_zero(s)) + 1;
    for (std::size_t i = 0; i < nb; ++i) r[i] -= 2.0 * phi[flip] * a(i, flip);
    phi[flip] = -phi[flip];
    const double v = objective(r);
    if (v > best) {
      best = v;
      best_phi = phi;
    }
  }
  std::vector<double> exact(nb, 0.0);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) exact[i] += a(i, j) * best_phi[j];
  return {objective(exact), best_phi};
}

LipschitzReport check_lipschitz(const Graphon& g, double declared_k_g, const std::vector<Interval>& partition,
                                double tol, std::size_t grid) {
  std::vector<Interval> cells = partition.empty() ? std::vector<Interval>{{0.0, 1.0}} : partition;
  LipschitzReport report;
  report.declared = declared_k_g;
  const std::size_t m = std::max<std::size_t>(grid, 2);
  std::vector<double> us(m), vs(m), vals(m * m);
  for (const Interval& cu : cells)
    for (const Interval& cv : cells) {
      for (std::size_t a = 0; a < m; ++a) {
        us[a] = cu.lo + (cu.hi - cu.lo) * (static_cast<double>(a) + 0.5) / static_cast<double>(m);
        vs[a] = cv.lo + (cv.hi - cv.lo) * (static_cast<double>(a) + 0.5) / static_cast<double>(m);
      }
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) vals[a * m + b] = g.eval(us[a], vs[b]);
      auto consider = [&](std::size_t a1, std::size_t b1, std::size_t a2, std::size_t b2) {
        const double dist = std::abs(us[a1] - us[a2]) + std::abs(vs[b1] - vs[b2]);
        const double ratio = std::abs(vals[a1 * m + b1] - vals[a2 * m + b2]) / dist;
        if (ratio > report.observed) {
          report.observed = ratio;
          if (ratio > declared_k_g + tol)
            report.violation = LipschitzReport::Violation{us[a1], vs[b1], us[a2], vs[b2], ratio};
        }
      };
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) {
          if (a + 1 < m) consider(a, b, a + 1, b);
          if (b + 1 < m) consider(a, b, a, b + 1);
        }
    }
  report.certified = report.observed <= declared_k_g + tol;
  if (report.certified) report.violation.reset();
  return report;
}

}  // namespace gmfs
