#pragma once

#include <nlohmann/json.hpp>

#include "nsm/core/types.hpp"

namespace nsm {

/// Per-dimension z-score: z = (x - shift) / scale.
struct Standardizer {
  Vec shift;
  Vec scale;

  static Standardizer identity(Index dim);
  /// Column means and population standard deviations of the rows; a
  /// constant column gets scale 1 (with a warning).
  static Standardizer fit(const Mat& rows);

  Index dim() const { return shift.size(); }
  Vec transform(const Vec& x) const;
  Vec inverse(const Vec& z) const;
  Mat transform_rows(const Mat& X) const;
  Mat inverse_rows(const Mat& Z) const;
  double log_scale_sum() const { return scale.array().log().sum(); }

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

}  // namespace nsm
