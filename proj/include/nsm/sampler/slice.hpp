#pragma once

#include <functional>

#include "nsm/core/rng.hpp"
#include "nsm/core/types.hpp"

namespace nsm::sampler {

struct SliceConfig {
  Vec widths;         // initial bracket width per coordinate
  int max_steps = 10; // stepping-out budget per update
  int warmup = 500;
  int thin = 1;
};

struct SliceStats {
  long evaluations = 0;
  long exhausted_brackets = 0;  // step-out budget hit while still inside the slice
};

using LogDensity = std::function<double(const Vec&)>;

/// Coordinate-wise slice sampling with stepping-out and shrinkage; returns count x d draws after warmup.
Mat slice_sample(const LogDensity& log_density, const Vec& init, Index count, const SliceConfig& cfg, Rng& rng,
                 SliceStats* stats = nullptr);

}  // namespace nsm::sampler
