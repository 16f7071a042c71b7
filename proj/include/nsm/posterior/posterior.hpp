#pragma once

#include <functional>

#include "nsm/loss/nsm_loss.hpp"
#include "nsm/posterior/gaussian.hpp"
#include "nsm/sampler/slice.hpp"

namespace nsm::posterior {

/// Closed-form generalised posterior for an exponential-family surrogate:
/// precision = prior precision + 2 beta n A, mean = cov (prior precision mu - 2 beta n B).
GaussianPosterior nsm_conj_posterior(const GaussianPrior& prior, const loss::ConjCoefficients& coeffs, double beta,
                                     double n);
inline GaussianPosterior nsm_conj_posterior(const GaussianPrior& prior, const loss::ConjCoefficients& coeffs,
                                            double beta) {
  return nsm_conj_posterior(prior, coeffs, beta, coeffs.n);
}

/// 1e-2 Tr(A) / d + 1e-12.
double default_ridge(const Mat& A);
/// -(A + lambda I)^{-1} B; lambda < 0 selects default_ridge.
Vec theta_hat_closed_form(const loss::ConjCoefficients& coeffs, double lambda = -1.0);

struct NelderMeadOptions {
  int max_evaluations = 5000;
  double tolerance = 1e-6;  // simplex diameter
  Vec initial_step;         // per coordinate; empty means 0.1 * max(1, |x0_i|)
};

struct NelderMeadResult {
  Vec argmin;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& init,
                             const NelderMeadOptions& opt = {});

/// Derivative-free minimiser of the NSM loss for non-conjugate surrogates.
Vec theta_hat_optimize(const std::function<double(const Vec&)>& loss, const Vec& init, const NelderMeadOptions& opt = {});

/// Slice configuration with widths equal to the prior marginal standard deviations.
sampler::SliceConfig default_slice_config(const GaussianPrior& prior, int warmup = 500);

/// Draws from exp(-beta n L_NSM(theta)) pi(theta).
Mat nsm_sample(const GaussianPrior& prior, const Mat& data, const surrogate::Surrogate& model,
               const weights::ImqWeight& w, double beta, Index count, const sampler::SliceConfig& cfg, Rng& rng);

/// Draws from prod_i q(x_i | theta) pi(theta).
Mat nle_sample(const GaussianPrior& prior, const Mat& data, const surrogate::Surrogate& model, Index count,
               const sampler::SliceConfig& cfg, Rng& rng);

}  // namespace nsm::posterior
