#pragma once

namespace nsm {

/// Regularised lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
double chi2_cdf(double x, double dof);
/// Inverse of chi2_cdf by bisection (absolute/relative width 1e-12).
double chi2_quantile(double p, double dof);

}  // namespace nsm
