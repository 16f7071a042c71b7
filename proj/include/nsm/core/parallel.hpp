#pragma once

#include <cstddef>
#include <span>

namespace nsm {

/// Deterministic pairwise (tree) summation; the reduction order depends only
/// on the length, never on the thread count.
double pairwise_sum(std::span<const double> values);

/// Worker count for OpenMP regions (defaults to all available cores).
int worker_count();
void set_worker_count(int workers);

}  // namespace nsm
