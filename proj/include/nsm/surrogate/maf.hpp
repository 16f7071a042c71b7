#pragma once

#include "nsm/core/rng.hpp"
#include "nsm/surrogate/surrogate.hpp"

namespace nsm::surrogate {

struct MafConfig {
  Index transforms = 5;
  std::vector<Index> hidden{50, 50};
};

/// Masked autoregressive flow: u_i = (v_i - mu_i(v_<i, theta)) / sigma_i(v_<i, theta)
/// per transform, coordinates reversed between transforms, standard normal base.
class Maf : public Surrogate {
 public:
  Maf(Index x_dim, Index theta_dim, MafConfig cfg, Rng& rng);
  Maf(Index x_dim, Index theta_dim, MafConfig cfg);  // zero parameters: mu = 0, sigma = log 2

  std::string family() const override { return "maf"; }
  double log_density(const Vec& x, const Vec& theta) const override;
  double log_density_sum(const Mat& X, const Vec& theta) const override;
  ScoreTrace score_trace(const Vec& x, const Vec& theta) const override;
  Mat hessian_x(const Vec& x, const Vec& theta) const override;
  diff::Var record_objective(diff::Tape& tape, const Mat& Z, const Mat& Th) const override;

  /// Base variable for x (original coordinates in, base coordinates out).
  Vec to_base(const Vec& x, const Vec& theta) const;
  Vec from_base(const Vec& z, const Vec& theta) const;
  /// count x x_dim draws.
  Mat sample(const Vec& theta, Index count, Rng& rng) const;

  const MafConfig& config() const { return cfg_; }

 protected:
  nlohmann::json hyperparameters() const override;

 private:
  struct Derivs {
    double log_q = 0.0;
    Vec score;
    Mat hessian;
  };
  Derivs derivatives(const Vec& zx, const Vec& t, bool hessian) const;
  static nets::MlpSpec spec(Index x_dim, Index theta_dim, const MafConfig& cfg);
  MafConfig cfg_;
};

}  // namespace nsm::surrogate
