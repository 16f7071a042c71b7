#pragma once

#include "nsm/surrogate/surrogate.hpp"

namespace nsm::surrogate {

struct MdnConfig {
  Index components = 10;
  std::vector<Index> hidden{50, 50};
  double variance_floor = 1e-4;  // standardised scale
};

/// Gaussian mixture with diagonal covariances; weights, means and variances are heads of one net on theta.
class Mdn : public Surrogate {
 public:
  Mdn(Index x_dim, Index theta_dim, MdnConfig cfg, Rng& rng);
  Mdn(Index x_dim, Index theta_dim, MdnConfig cfg);  // zero parameters

  struct Mixture {
    Vec weights;  // K, sums to one
    Mat means;    // K x d, original coordinates
    Mat vars;     // K x d, original coordinates
  };
  Mixture mixture(const Vec& theta) const;
  /// Smallest variance any component can have, in original coordinates.
  double variance_lower_bound() const;

  std::string family() const override { return "mdn"; }
  double log_density(const Vec& x, const Vec& theta) const override;
  double log_density_sum(const Mat& X, const Vec& theta) const override;
  ScoreTrace score_trace(const Vec& x, const Vec& theta) const override;
  Mat hessian_x(const Vec& x, const Vec& theta) const override;
  diff::Var record_objective(diff::Tape& tape, const Mat& Z, const Mat& Th) const override;

  const MdnConfig& config() const { return cfg_; }
  /// Responsibilities at (x, theta); exposed for checks.
  Vec responsibilities(const Vec& x, const Vec& theta) const;

 protected:
  nlohmann::json hyperparameters() const override;

 private:
  static nets::MlpSpec spec(Index x_dim, Index theta_dim, const MdnConfig& cfg);
  Mixture standardised_mixture(const Vec& theta) const;
  MdnConfig cfg_;
};

}  // namespace nsm::surrogate
