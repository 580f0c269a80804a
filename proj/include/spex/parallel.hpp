#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace spex {

// Global worker cap; 0 means hardware concurrency. Overridable via
// SPEX_THREADS or the CLI --threads flag.
int thread_cap();
void set_thread_cap(int n);

// Static partition of [0, n) over worker threads. Workers write to
// disjoint per-index slots, so results are identical to a serial run.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int cap = thread_cap();
  const std::size_t workers =
      std::min<std::size_t>(n, cap > 0 ? static_cast<std::size_t>(cap)
                                       : std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex err_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lk(err_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace spex
