#pragma once

#include <cstddef>
#include <vector>

#include "gmfs/matrix.hpp"

namespace gmfs {

struct Assignment {
  double cost = 0.0;
  std::vector<std::size_t> column_of_row;
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method with
/// potentials, O(m^3)).
Assignment min_cost_assignment(const Matrix& cost);

}  // namespace gmfs
