#pragma once

#include <cmath>
#include <functional>

#include "nsm/core/types.hpp"

namespace testutil {

using nsm::Mat;
using nsm::Vec;

inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (nsm::Index i = 0; i < x.size(); ++i) {
    Vec p = x, m = x;
    p(i) += h;
    m(i) -= h;
    g(i) = (f(p) - f(m)) / (2 * h);
  }
  return g;
}

inline double fd_laplacian(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  const double f0 = f(x);
  double s = 0;
  for (nsm::Index i = 0; i < x.size(); ++i) {
    Vec p = x, m = x;
    p(i) += h;
    m(i) -= h;
    s += (f(p) - 2 * f0 + f(m)) / (h * h);
  }
  return s;
}

inline Mat fd_hessian(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  const nsm::Index d = x.size();
  Mat H(d, d);
  for (nsm::Index i = 0; i < d; ++i)
    for (nsm::Index j = 0; j < d; ++j) {
      auto at = [&](double si, double sj) {
        Vec y = x;
        y(i) += si * h;
        y(j) += sj * h;
        return f(y);
      };
      H(i, j) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h);
    }
  return H;
}

// max_i |a_i - b_i| / max(|b|_inf, floor)
inline double rel_err(const Vec& a, const Vec& b, double floor = 1e-8) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(b.lpNorm<Eigen::Infinity>(), floor);
}

inline double rel_err(double a, double b, double floor = 1e-8) { return std::abs(a - b) / std::max(std::abs(b), floor); }

}  // namespace testutil
