#pragma once

#include "nsm/surrogate/surrogate.hpp"

namespace nsm::surrogate {

struct EbmConfig {
  std::vector<Index> hidden_T{128};  // empty: T linear in x
  std::vector<Index> hidden_b{128};
  bool standardise_theta = false;
};

/// Everything the conjugate update needs at one x, in original coordinates.
struct EbmFeatures {
  Vec T;             // d_theta
  double b = 0.0;
  Mat grad_T;        // d_theta x d_x
  Vec grad_b;        // d_x
  Vec lap_T;         // d_theta, divergence of each row of grad_T
  double lap_b = 0.0;
  std::vector<Mat> hess_T;  // d_theta Hessians, only when requested
  Mat hess_b;
};

/// Exponential-family energy model: log q(x|theta) = T(x)'theta + b(x) + const(theta).
class ExpFamEbm : public Surrogate {
 public:
  ExpFamEbm(Index x_dim, Index theta_dim, EbmConfig cfg, Rng& rng);
  ExpFamEbm(Index x_dim, Index theta_dim, EbmConfig cfg);  // zero parameters

  std::string family() const override { return "ebm"; }
  bool normalised() const override { return false; }
  /// Unnormalised: T(x)'theta + b(x).
  double log_density(const Vec& x, const Vec& theta) const override;
  ScoreTrace score_trace(const Vec& x, const Vec& theta) const override;
  Mat hessian_x(const Vec& x, const Vec& theta) const override;
  /// Score-matching objective mean(||s||^2 + 2 tr) on standardised data.
  /// Supports at most one hidden layer per network.
  diff::Var record_objective(diff::Tape& tape, const Mat& Z, const Mat& Th) const override;
  bool uses_theta_standardizer() const override { return cfg_.standardise_theta; }

  EbmFeatures features(const Vec& x, bool full_hessians = false) const;
  const EbmConfig& config() const { return cfg_; }

 protected:
  nlohmann::json hyperparameters() const override;

 private:
  static nets::MlpSpec spec(Index x_dim, Index out, const std::vector<Index>& hidden, const std::string& head);
  EbmConfig cfg_;
};

}  // namespace nsm::surrogate
