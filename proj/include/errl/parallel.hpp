#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace errl {

// Worker count from ERRL_THREADS (default 1). Results must not depend on it:
// callers write into pre-sized per-index slots and reduce in index order.
inline int thread_count() {
  if (const char* env = std::getenv("ERRL_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// Runs fn(0..count-1) on num_threads workers with static contiguous
// partitioning. The first exception thrown by any worker is rethrown here.
inline void parallel_for(int count, int num_threads, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (num_threads <= 1 || count == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = std::min(num_threads, count);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      const int lo = static_cast<int>(static_cast<long>(count) * w / workers);
      const int hi = static_cast<int>(static_cast<long>(count) * (w + 1) / workers);
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace errl
