#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace plateplast {

/// Worker count: hardware concurrency capped by PLATE_PLAST_THREADS.
int worker_count();

/// Runs body(begin, end) over a static partition of [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Pairwise (tree) summation in index order; independent of worker count.
double pairwise_sum(std::span<const double> values);

}  // namespace plateplast
