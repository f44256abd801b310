#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace fpesc {

// Worker cap: FPESC_THREADS env var, 0 or unset = hardware concurrency.
inline int max_workers() {
  if (const char* env = std::getenv("FPESC_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Static range partition over [0, n). fn(begin, end) runs once per worker;
// callers that need determinism must write results by index and reduce in
// index order afterwards. Exceptions are rethrown from the lowest worker.
template <class Fn>
void parallel_ranges(std::size_t n, Fn&& fn, int workers = 0) {
  if (workers <= 0) workers = max_workers();
  workers = static_cast<int>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(workers);
  std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::size_t b = std::min(n, w * chunk);
    std::size_t e = std::min(n, b + chunk);
    pool.emplace_back([&, w, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errs[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errs)
    if (err) std::rethrow_exception(err);
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, int workers = 0) {
  parallel_ranges(
      n,
      [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) fn(i);
      },
      workers);
}

}  // namespace fpesc
