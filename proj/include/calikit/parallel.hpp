#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace calikit {

// Thread-count hint. CALIKIT_THREADS is the only environment variable the
// library reads; absent or invalid means sequential execution.
inline int thread_hint() {
  const char* env = std::getenv("CALIKIT_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  if (n < 1) return 1;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw > 0 && static_cast<unsigned>(n) > 4 * hw) n = static_cast<int>(4 * hw);
  return n;
}

// Partitions [0, n) across threads. Each index must be independent of the
// others; results are then identical to the sequential run.
template <typename Fn>
void parallel_rows(std::size_t n, Fn&& fn) {
  int threads = thread_hint();
  if (threads <= 1 || n < 2048) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  std::size_t chunk = (n + static_cast<std::size_t>(threads) - 1) /
                      static_cast<std::size_t>(threads);
  for (int t = 0; t < threads; ++t) {
    std::size_t lo = static_cast<std::size_t>(t) * chunk;
    std::size_t hi = lo + chunk < n ? lo + chunk : n;
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace calikit
