#pragma once

#include <random>

#include "nsm/loss/nsm_loss.hpp"

namespace testutil {

// Score-matching pieces of the unit-variance Gaussian location model:
// T(x) = x, b(x) = -|x|^2 / 2, w = 1, so a_i = I, b_i = -x_i, c_i = |x_i|^2 - 2 d.
inline nsm::loss::ConjCache gaussian_location_cache(const nsm::Mat& data) {
  const nsm::Index n = data.rows(), d = data.cols();
  std::vector<nsm::Mat> a(static_cast<std::size_t>(n), nsm::Mat::Identity(d, d));
  std::vector<double> c(static_cast<std::size_t>(n));
  for (nsm::Index i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = data.row(i).squaredNorm() - 2.0 * static_cast<double>(d);
  return nsm::loss::ConjCache(std::move(a), -data, std::move(c));
}

inline nsm::Mat gaussian_data(nsm::Index n, const nsm::Vec& mean, nsm::Rng& rng) {
  std::normal_distribution<double> n01;
  nsm::Mat x(n, mean.size());
  for (nsm::Index i = 0; i < n; ++i)
    for (nsm::Index j = 0; j < mean.size(); ++j) x(i, j) = mean(j) + n01(rng);
  return x;
}

}  // namespace testutil
