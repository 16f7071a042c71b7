#include "nsm/core/parallel.hpp"

#include <omp.h>

namespace nsm {

namespace {

double tree_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return tree_sum(v, half) + tree_sum(v + half, n - half);
}

int g_workers = 0;

}  // namespace

double pairwise_sum(std::span<const double> values) { return tree_sum(values.data(), values.size()); }

int worker_count() { return g_workers > 0 ? g_workers : omp_get_max_threads(); }

void set_worker_count(int workers) {
  static const int initial = omp_get_max_threads();
  g_workers = workers;
  omp_set_num_threads(workers > 0 ? workers : initial);
}

}  // namespace nsm
