#pragma once

#include <cstddef>
#include <functional>

namespace gmfs {

/// Worker count used by parallel_for. Results never depend on this value:
/// every parallel loop writes disjoint outputs indexed by the loop variable.
void set_num_threads(int threads);
int num_threads();

/// Runs body(i) for i in [0, count). Nested calls run serially.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace gmfs
