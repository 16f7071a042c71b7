#pragma once

#include <vector>

#include "nsm/core/rng.hpp"
#include "nsm/surrogate/surrogate.hpp"
#include "nsm/weights/imq.hpp"

namespace nsm::surrogate {

/// Radial scan of the score and Laplacian at ||x|| = 1e0 ... 1e6 along random directions.
struct GrowthScan {
  std::vector<double> radii;
  std::vector<double> score_norm;   // max over directions at each radius
  std::vector<double> trace_abs;
  std::vector<double> weighted;     // max of w^2 ||s||^2 + w^2 |tr| (the loss integrand scale)
  double K1 = 0.0;  // sup ||s|| / (1 + ||x||^2)
  double K2 = 0.0;  // sup |tr| / (1 + ||x||^2)
  bool mdn_bound_holds = true;  // ||s|| <= (||x|| + max_k ||mean_k||) / lambda_min, MDN only
  bool passed = false;
};

/// Certificate for a fitted model at theta: all values finite, K1 and K2 finite, the weighted
/// integrand not growing over the last decade, and for an MDN the explicit score bound.
GrowthScan growth_scan(const Surrogate& model, const Vec& theta, const weights::ImqWeight& w, int directions,
                       Rng& rng, int max_decade = 6);

}  // namespace nsm::surrogate
