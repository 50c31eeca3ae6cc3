#include "gmfs/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gmfs {

namespace {
std::atomic<int> g_threads{1};
thread_local bool t_inside_parallel = false;
}  // namespace

void set_num_threads(int threads) { g_threads.store(std::max(1, threads)); }

int num_threads() { return g_threads.load(); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const auto workers = static_cast<std::size_t>(num_threads());
  if (workers <= 1 || count <= 1 || t_inside_parallel) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const std::size_t used = std::min(workers, count);
  std::exception_ptr error;
  std::mutex error_mutex;
  std::atomic<std::size_t> next{0};
  // Dynamic chunking; each index is still executed exactly once.
  const std::size_t chunk = std::max<std::size_t>(1, count / (used * 8));
  auto worker = [&] {
    t_inside_parallel = true;
    try {
      for (;;) {
        const std::size_t begin = next.fetch_add(chunk);
        if (begin >= count) break;
        const std::size_t end = std::min(count, begin + chunk);
        for (std::size_t i = begin; i < end; ++i) body(i);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(count);
    }
    t_inside_parallel = false;
  };
  std::vector<std::jthread> pool;
  pool.reserve(used - 1);
  for (std::size_t w = 0; w + 1 < used; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace gmfs
