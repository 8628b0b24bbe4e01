#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mfg {

/// Runs body(i) for i in [0, n) on up to `threads` workers. Work items are
/// claimed dynamically; results must be written to per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, unsigned(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace mfg
