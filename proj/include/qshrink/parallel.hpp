#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace qshrink::detail {

/// Runs body(r) for r in [0, n) across worker threads. Each index is handled
/// exactly once; callers store results by index so the reduction order never
/// depends on scheduling. threads = 0 uses the hardware concurrency.
template <class F>
void parallel_for(Eigen::Index n, unsigned threads, F&& body) {
  unsigned nt = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  nt = static_cast<unsigned>(std::min<Eigen::Index>(nt, n));
  if (nt <= 1) {
    for (Eigen::Index r = 0; r < n; ++r) body(r);
    return;
  }
  std::atomic<Eigen::Index> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nt);
  for (unsigned w = 0; w < nt; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (Eigen::Index r = next++; r < n; r = next++) body(r);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace qshrink::detail
