#pragma once

#include <vector>

#include "nsm/loss/nsm_loss.hpp"
#include "nsm/posterior/gaussian.hpp"

namespace nsm::metrics {

struct Mmd2Config {
  double lengthscale = 0.0;  // <= 0 selects the median heuristic
};

/// sqrt(median_{i<j} |z_i - z_j|^2 / 2) over the pooled rows of A and B.
double median_heuristic(const Mat& A, const Mat& B);

/// Biased (V-statistic) squared MMD with a Gaussian kernel; blocked and OpenMP-parallel.
double mmd2(const Mat& A, const Mat& B, const Mmd2Config& cfg = {});
/// Plain double loop, single-threaded; reference for mmd2.
double mmd2_naive(const Mat& A, const Mat& B, const Mmd2Config& cfg = {});

/// Mean of |theta_i - theta*|^2 over draws (rows).
double mse_samples(const Mat& samples, const Vec& theta_star);
/// |mu - theta*|^2 + tr(Sigma).
double mse_conjugate(const posterior::GaussianPosterior& post, const Vec& theta_star);

/// Fraction of posteriors whose (1 - alpha) ellipsoid holds theta*.
double empirical_coverage(const std::vector<posterior::GaussianPosterior>& posts, const Vec& theta_star,
                          double alpha = 0.05);
/// Sample posteriors are summarised by their moments first.
double empirical_coverage(const std::vector<Mat>& samples, const Vec& theta_star, double alpha = 0.05);

/// KL(p || q) between Gaussians.
double gaussian_kl(const posterior::GaussianPosterior& p, const posterior::GaussianPosterior& q);

/// KL(clean || contaminated) for each contaminant replacing observation `replaced`.
/// The weight stays as given (fitted on the clean data).
Vec pif_kl_probe(const Mat& data, Index replaced, const std::vector<Vec>& contaminants,
                 const surrogate::ExpFamEbm& model, const weights::ImqWeight& w,
                 const posterior::GaussianPrior& prior, double beta);

}  // namespace nsm::metrics
