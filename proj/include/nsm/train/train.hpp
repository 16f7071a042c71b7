#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsm/core/types.hpp"
#include "nsm/surrogate/ebm.hpp"
#include "nsm/surrogate/surrogate.hpp"

namespace nsm::train {

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-5;
  Index batch_size = 128;
  int max_epochs = 1000;
  double val_fraction = 0.2;
  int patience = 20;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, standardised coordinates
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double final_val_loss = 0.0;
  bool stopped_early = false;
  std::string objective;
  TrainConfig config;
  Standardizer x_standardizer;
  Standardizer theta_standardizer;

  nlohmann::json to_json() const;
};

class Adam {
 public:
  Adam(Index size, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// L2 decay is added to the gradient before the moment updates.
  void step(Vec& params, const Vec& gradient);

 private:
  double lr_, wd_, b1_, b2_, eps_;
  Vec m_, v_;
  long t_ = 0;
};

/// Negative log-likelihood fit of an MDN or MAF on (theta_i, x_i) rows.
TrainReport fit_nle(surrogate::Surrogate& model, const Mat& theta, const Mat& x, const TrainConfig& cfg);
/// Conditional score-matching fit of the energy model.
TrainReport fit_score_matching(surrogate::ExpFamEbm& model, const Mat& theta, const Mat& x, const TrainConfig& cfg);

/// Objective value and parameter gradient on standardised rows.
std::pair<double, Vec> objective_and_gradient(const surrogate::Surrogate& model, const Vec& params, const Mat& Z,
                                              const Mat& Th);

}  // namespace nsm::train
