#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dathermo {

inline int default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Work items are
/// claimed in chunks from a shared counter; results must be written to
/// per-index slots so the outcome does not depend on scheduling. The first
/// exception thrown by any item is rethrown.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn, std::size_t chunk = 64) {
  if (count == 0) return;
  workers = std::max(1, workers);
  if (workers == 1 || count <= chunk) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    try {
      for (;;) {
        std::size_t begin = next.fetch_add(chunk);
        if (begin >= count) return;
        std::size_t end = std::min(count, begin + chunk);
        for (std::size_t i = begin; i < end; ++i) fn(i);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(count);
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), (count + chunk - 1) / chunk);
  std::vector<std::thread> pool;
  pool.reserve(n_threads - 1);
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace dathermo
