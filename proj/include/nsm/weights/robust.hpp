#pragma once

#include <cstdint>
#include <string>

#include "nsm/core/types.hpp"

namespace nsm::weights {

enum class ScatterMethod { automatic, mcd, median_mad };

ScatterMethod parse_scatter_method(const std::string& name);
std::string to_string(ScatterMethod m);

struct LocationScatter {
  Vec location;
  Mat scatter;
  bool floored = false;  // eigenvalues were clipped at 1e-8
  ScatterMethod method = ScatterMethod::mcd;
};

struct McdOptions {
  int starts = 200;
  int max_csteps = 30;
  std::uint64_t seed = 0;
};

/// FAST-MCD with h = ceil((n + d + 1) / 2) and a chi-square consistency factor.
LocationScatter fast_mcd(const Mat& data, const McdOptions& opt = {});
/// Coordinate-wise median and diag((1.4826 MAD)^2).
LocationScatter median_mad(const Mat& data);
/// automatic: mcd when d <= 10 and n >= 50, median-MAD otherwise.
LocationScatter robust_location_scatter(const Mat& data, ScatterMethod method, std::uint64_t seed = 0);

double median(std::vector<double> v);

}  // namespace nsm::weights
