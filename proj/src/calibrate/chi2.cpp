#include "nsm/calibrate/chi2.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nsm {

namespace {

// series for x < a + 1
double gamma_p_series(double a, double x) {
  double term = 1.0 / a, sum = term, ap = a;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x), x >= a + 1
double gamma_q_fraction(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon();
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-17) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0) || x < 0) throw std::invalid_argument("gamma_p: need a > 0 and x >= 0");
  if (x == 0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return x < a + 1.0 ? gamma_p_series(a, x) : 1.0 - gamma_q_fraction(a, x);
}

double chi2_cdf(double x, double dof) { return x <= 0 ? 0.0 : gamma_p(0.5 * dof, 0.5 * x); }

double chi2_quantile(double p, double dof) {
  if (!(p >= 0 && p < 1) || !(dof > 0)) throw std::invalid_argument("chi2_quantile: need 0 <= p < 1, dof > 0");
  if (p == 0) return 0.0;
  double lo = 0.0, hi = std::max(1.0, dof);
  while (chi2_cdf(hi, dof) < p) {
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 1e-12 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(mid, dof) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace nsm
