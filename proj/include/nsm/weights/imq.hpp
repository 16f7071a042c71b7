#pragma once

#include <nlohmann/json.hpp>

#include "nsm/core/types.hpp"
#include "nsm/weights/robust.hpp"

namespace nsm::weights {

/// w(x) = (1 + (x - nu)' P (x - nu))^(-1/zeta), or w = 1 in constant mode.
class ImqWeight {
 public:
  /// The zeta -> infinity limit, w = 1 everywhere.
  static ImqWeight constant(Index dim);
  ImqWeight(double zeta, Vec location, const Mat& scatter);
  static ImqWeight fit(const Mat& data, double zeta, ScatterMethod method, std::uint64_t seed = 0);

  struct Value {
    double w2 = 1.0;
    Vec grad_w2;
  };

  double weight(const Vec& x) const;
  Vec weight_sq_grad(const Vec& x) const;
  Value eval(const Vec& x) const;

  bool is_constant() const { return constant_; }
  double zeta() const { return zeta_; }
  const Vec& location() const { return location_; }
  const Mat& precision() const { return precision_; }
  Index dim() const { return location_.size(); }
  /// sup ||grad w^2|| <= (4/zeta) lambda_max(P) / sqrt(lambda_min(P)).
  double grad_bound() const;

  nlohmann::json to_json() const;
  static ImqWeight from_json(const nlohmann::json& j);

 private:
  ImqWeight() = default;
  bool constant_ = false;
  double zeta_ = 1.0;
  Vec location_;
  Mat precision_;
};

}  // namespace nsm::weights
