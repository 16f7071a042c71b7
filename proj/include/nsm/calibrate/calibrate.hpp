#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "nsm/core/error.hpp"
#include "nsm/loss/nsm_loss.hpp"
#include "nsm/posterior/posterior.hpp"

namespace nsm::calibrate {

struct CalibConfig {
  double alpha = 0.05;
  int bootstraps = 100;
  int steps = 20;
  double beta0 = 1.0;
  std::uint64_t seed = 0;
  // importance-sampling variant only
  Index draws = 500;
  int warmup = 500;
  double ess_floor = 0.30;
  double ess_abort = 0.01;  // mean ESS fraction after a refresh below which we give up

  void validate() const;
  double kappa(int t) const { return 10.0 / (t + 10.0); }
  double beta_floor() const { return beta0 / 100.0; }
};

struct CalibStep {
  int t = 0;
  double beta = 0.0;
  double coverage = 0.0;
  double ess = std::numeric_limits<double>::quiet_NaN();  // mean ESS fraction (importance variant)
  bool refreshed = false;
};

struct CalibResult {
  double beta = 0.0;            // after the final update
  double final_coverage = 0.0;  // coverage re-estimated at beta
  Vec theta_hat;
  std::vector<CalibStep> trace;
  int refreshes = 0;
};

class CalibrationError : public NumericError {
 public:
  CalibrationError(const std::string& what, std::vector<CalibStep> trace)
      : NumericError(what), trace_(std::move(trace)) {}
  const std::vector<CalibStep>& trace() const { return trace_; }

 private:
  std::vector<CalibStep> trace_;
};

/// (theta - mu)' Sigma^{-1} (theta - mu) <= chi2_{1-alpha, d}.
bool credible_region_contains(const posterior::GaussianPosterior& post, const Vec& theta, double alpha);

/// Multinomial resample of n indices expressed as counts, from stream (seed, t, b).
Vec bootstrap_counts(Index n, std::uint64_t seed, int t, int b);

/// log beta += kappa_t (coverage - (1 - alpha)), clamped below at beta0 / 100.
double beta_update(const CalibConfig& cfg, int t, double beta, double coverage);

/// Bootstrap coverage of theta_hat at one beta (streams (seed, t, b)); NaN if every posterior is degenerate.
double conjugate_coverage(const loss::ConjCache& cache, const posterior::GaussianPrior& prior, const CalibConfig& cfg,
                          const Vec& theta_hat, double beta, int t);

/// Closed-form calibration over count-weighted bootstrap posteriors.
CalibResult calibrate_conjugate(const loss::ConjCache& cache, const posterior::GaussianPrior& prior,
                                const CalibConfig& cfg);
CalibResult calibrate_conjugate(const Mat& data, const surrogate::ExpFamEbm& model, const weights::ImqWeight& w,
                                const posterior::GaussianPrior& prior, const CalibConfig& cfg);

/// Per-observation losses l_j(theta); the generalised posterior is exp(-beta sum_j l_j) pi.
using PointLossFn = std::function<Vec(const Vec&)>;

/// Self-normalised weights over draws (rows of L, M x n) for bootstrap counts at trial beta.
Vec importance_weights(const Mat& L, const Vec& counts, double beta, double beta_curr);
double effective_sample_size(const Vec& w);
/// Smallest value whose cumulative weight reaches p of the total.
double weighted_quantile(const Vec& values, const Vec& weights, double p);

/// Draws at one beta plus the cached per-observation losses.
struct IsCache {
  Mat draws;  // M x d
  Mat L;      // M x n
  double beta = 0.0;
};
IsCache run_chain(const PointLossFn& losses, Index n, const posterior::GaussianPrior& prior, double beta,
                  Index draws, int warmup, Rng& rng);

/// Importance-reweighted calibration; theta-hat by Nelder-Mead on sum_j l_j.
CalibResult calibrate_mcmc_is(const PointLossFn& losses, Index n, const posterior::GaussianPrior& prior,
                              const CalibConfig& cfg);

void write_trace_csv(const std::filesystem::path& path, const std::vector<CalibStep>& trace);

}  // namespace nsm::calibrate
