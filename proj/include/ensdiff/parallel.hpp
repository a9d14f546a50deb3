#pragma once

#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ensdiff {

// Worker count from ENSDIFF_THREADS (default 1). Results never depend on it:
// every parallel task draws from streams derived from its own index.
inline unsigned thread_count() {
  if (const char* env = std::getenv("ENSDIFF_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

// Runs body(i) for i in [0, n) on up to thread_count() threads, rethrowing
// the first exception.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr error;
  auto run = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= n || error) return;
        i = next++;
      }
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ensdiff
