#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mfsde {

namespace detail {
inline std::atomic<int>& worker_count_slot() {
  static std::atomic<int> w{0};  // 0 -> hardware concurrency
  return w;
}
}  // namespace detail

inline int hardware_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

inline int default_workers() {
  const int w = detail::worker_count_slot().load();
  return w > 0 ? w : hardware_workers();
}

inline void set_default_workers(int workers) { detail::worker_count_slot().store(workers); }

/// Runs block(begin, end) over a static partition of [0, n). Workers only fill
/// disjoint, caller-owned slots, so numeric output is identical for any worker
/// count; reductions afterwards must use order-fixed sums (see pairwise_sum).
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& block,
                         int workers = 0) {
  if (n == 0) return;
  if (workers <= 0) workers = default_workers();
  const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (nw <= 1) {
    block(0, n);
    return;
  }
  const std::size_t chunk = (n + nw - 1) / nw;
  std::vector<std::thread> pool;
  pool.reserve(nw - 1);
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto run = [&](std::size_t lo, std::size_t hi) {
    try {
      block(lo, hi);
    } catch (...) {
      if (!failed.exchange(true)) error = std::current_exception();
    }
  };
  for (std::size_t w = 1; w < nw; ++w) {
    const std::size_t lo = std::min(n, w * chunk);
    const std::size_t hi = std::min(n, (w + 1) * chunk);
    if (lo < hi) pool.emplace_back(run, lo, hi);
  }
  run(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
  if (failed.load()) std::rethrow_exception(error);
}

}  // namespace mfsde
