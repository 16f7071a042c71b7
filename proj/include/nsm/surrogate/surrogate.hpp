#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsm/core/types.hpp"
#include "nsm/diff/tape.hpp"
#include "nsm/nets/mlp.hpp"
#include "nsm/train/standardizer.hpp"

namespace nsm::surrogate {

struct ScoreTrace {
  Vec score;
  double trace = 0.0;
};

/// Conditional density q(x | theta) parameterised by one or more networks.
///
/// The networks see standardised x (and theta, where the family uses it);
/// every public evaluation takes and returns ORIGINAL coordinates.
class Surrogate {
 public:
  virtual ~Surrogate() = default;

  virtual std::string family() const = 0;
  Index x_dim() const { return x_dim_; }
  Index theta_dim() const { return theta_dim_; }

  /// False for energy-based models, whose log_density is unnormalised.
  virtual bool normalised() const { return true; }
  virtual double log_density(const Vec& x, const Vec& theta) const = 0;
  /// Sum of log densities of the rows of X under one theta.
  virtual double log_density_sum(const Mat& X, const Vec& theta) const;
  virtual ScoreTrace score_trace(const Vec& x, const Vec& theta) const = 0;
  /// Full input Hessian of log q (original coordinates).
  virtual Mat hessian_x(const Vec& x, const Vec& theta) const = 0;

  Vec score_x(const Vec& x, const Vec& theta) const { return score_trace(x, theta).score; }
  double hessian_trace_x(const Vec& x, const Vec& theta) const { return score_trace(x, theta).trace; }

  /// Training objective on a standardised minibatch (rows of Z and Th).
  virtual diff::Var record_objective(diff::Tape& tape, const Mat& Z, const Mat& Th) const = 0;
  /// Whether theta is standardised before it reaches the networks.
  virtual bool uses_theta_standardizer() const { return true; }

  Vec params() const;
  void set_params(const Vec& p);
  Index param_count() const;

  const Standardizer& x_standardizer() const { return x_std_; }
  const Standardizer& theta_standardizer() const { return theta_std_; }
  void set_standardizers(Standardizer x, Standardizer theta);

  const std::vector<nets::Mlp>& networks() const { return nets_; }

  /// Writes dir/name.json plus one .bin/.json pair per network.
  void save(const std::filesystem::path& dir, const std::string& name) const;

 protected:
  Surrogate(Index x_dim, Index theta_dim);
  virtual nlohmann::json hyperparameters() const = 0;

  Index x_dim_;
  Index theta_dim_;
  std::vector<nets::Mlp> nets_;
  Standardizer x_std_;
  Standardizer theta_std_;

  friend std::unique_ptr<Surrogate> load_surrogate(const std::filesystem::path& manifest);
};

std::unique_ptr<Surrogate> load_surrogate(const std::filesystem::path& manifest);

}  // namespace nsm::surrogate
