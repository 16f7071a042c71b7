#pragma once

#include <nlohmann/json.hpp>

#include "nsm/core/rng.hpp"
#include "nsm/core/types.hpp"

namespace nsm::posterior {

struct GaussianPrior {
  Vec mean;
  Mat cov;

  GaussianPrior() = default;
  GaussianPrior(Vec mean, Mat cov);  // validates symmetry and positive definiteness

  Index dim() const { return mean.size(); }
  double log_density(const Vec& theta) const;
  Mat precision() const;
  Vec sd() const { return cov.diagonal().cwiseSqrt(); }
  Mat sample(Index count, Rng& rng) const;
};

struct GaussianPosterior {
  Vec mean;
  Mat cov;
  double beta = 1.0;
  nlohmann::json provenance = nlohmann::json::object();

  Index dim() const { return mean.size(); }
  nlohmann::json to_json() const;
  static GaussianPosterior from_json(const nlohmann::json& j);
  /// Moment summary of draws (rows).
  static GaussianPosterior from_samples(const Mat& draws);
};

/// Cholesky factor with a condition-number diagnostic on failure.
Eigen::LLT<Mat> spd_factor(const Mat& M, const std::string& what);

}  // namespace nsm::posterior
