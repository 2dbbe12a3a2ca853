#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace dgn::detail {

/// Runs fn(begin, end) over contiguous row blocks. Each row is written by
/// exactly one block, so results are identical for any thread count as long
/// as fn only touches its own rows.
template <typename Fn>
void parallel_rows(std::ptrdiff_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2 * threads) {
    fn(std::ptrdiff_t{0}, n);
    return;
  }
  const std::ptrdiff_t chunk = (n + threads - 1) / threads;
  std::vector<std::jthread> workers;
  workers.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    const std::ptrdiff_t begin = t * chunk;
    const std::ptrdiff_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
}

}  // namespace dgn::detail
