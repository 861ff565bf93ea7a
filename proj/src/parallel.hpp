#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace irtmix::detail {

/// Static block partition of [0, n) across n_threads workers. Work items write
/// to disjoint slots, so results are independent of scheduling; reductions are
/// performed afterwards in index order to keep outputs bit-stable for any
/// thread count.
template <typename Fn>
void parallel_for(std::size_t n, int n_threads, Fn&& fn) {
  if (n == 0) return;
  const int workers = std::max(1, std::min<int>(n_threads, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, w, &fn]() {
      for (std::size_t i = lo; i < hi; ++i) fn(i, w);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace irtmix::detail
