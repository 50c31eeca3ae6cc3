#include "gmfs/assignment.hpp"

#include <limits>
#include <stdexcept>

namespace gmfs {

Assignment min_cost_assignment(const Matrix& cost) {
  const std::size_t m = cost.rows();
  if (cost.cols() != m) throw std::invalid_argument("assignment needs a square cost matrix");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a sentinel.
  std::vector<double> u(m + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (std::size_t i = 1; i <= m; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.column_of_row.assign(m, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j]) out.column_of_row[p[j] - 1] = j - 1;
  // Recompute from the matching rather than trusting the accumulated potentials.
  for (std::size_t i = 0; i < m; ++i) out.cost += cost(i, out.column_of_row[i]);
  return out;
}

}  // namespace gmfs
