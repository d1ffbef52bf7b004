#pragma once

#include <cstddef>
#include <functional>

namespace favs {

/// Sets the upper bound on worker threads used by batched kernels.
/// Values below 1 are treated as 1. The default cap is 1 (serial).
void set_thread_cap(int cap);

int thread_cap();

/// Runs fn(begin, end) over disjoint contiguous chunks of [0, count).
/// Every chunk writes only its own slice of the output, so results are
/// bit-identical for any thread cap.
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace favs
