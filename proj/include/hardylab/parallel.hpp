#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace hardylab {

namespace detail {

inline std::atomic<int>& thread_override() {
  static std::atomic<int> value{0};
  return value;
}

inline bool& inside_parallel_region() {
  thread_local bool flag = false;
  return flag;
}

}  // namespace detail

// Worker count: explicit override, then HARDYLAB_THREADS, then hardware.
inline int thread_count() {
  int forced = detail::thread_override().load();
  if (forced > 0) return forced;
  if (const char* env = std::getenv("HARDYLAB_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// 0 restores the environment/hardware default.
inline void set_thread_count(int n) { detail::thread_override().store(n < 0 ? 0 : n); }

// Calls fn(i) for i in [0, count). Each index is handled exactly once, on a
// static contiguous partition, so any per-index output slot is written by a
// single worker and results do not depend on the worker count. Nested calls
// run serially on the calling worker.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  if (count == 0) return;
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), count);
  if (workers <= 1 || detail::inside_parallel_region()) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      detail::inside_parallel_region() = true;
      std::size_t begin = count * w / workers;
      std::size_t end = count * (w + 1) / workers;
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace hardylab
