#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace idcgan {

// Worker cap from DERAIN_THREADS (0 means single-threaded deterministic
// mode); defaults to the hardware concurrency when unset. The variable is
// re-read on every call so a process can scope the cap per phase.
inline int worker_count() {
  if (const char* env = std::getenv("DERAIN_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    return v <= 0 ? 1 : static_cast<int>(v);
  }
  static const int hw = [] {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
  }();
  return hw;
}

// Runs f(i) for i in [0, n). Each index is handled by exactly one worker and
// every worker owns a contiguous chunk, so results are identical for any
// worker count as long as f writes disjoint outputs per index.
template <typename F>
void parallel_for(std::int64_t n, F&& f) {
  const int workers = worker_count();
  if (workers <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  const int used = static_cast<int>(std::min<std::int64_t>(workers, n));
  const std::int64_t chunk = (n + used - 1) / used;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(used));
  for (int w = 0; w < used; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
    pool.emplace_back([lo, hi, &f] {
      for (std::int64_t i = lo; i < hi; ++i) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace idcgan
