#pragma once

#include "nsm/core/types.hpp"
#include "nsm/surrogate/ebm.hpp"
#include "nsm/surrogate/surrogate.hpp"
#include "nsm/weights/imq.hpp"

namespace nsm::loss {

/// w^2 ||s||^2 + 2 grad(w^2).s + 2 w^2 tr at one datum.
double point_loss(const surrogate::Surrogate& model, const weights::ImqWeight& w, const Vec& x, const Vec& theta);

/// Per-row contributions, OpenMP-parallel over rows. Throws NumericError naming the row.
Vec point_losses(const Mat& data, const surrogate::Surrogate& model, const weights::ImqWeight& w, const Vec& theta);
/// Single-threaded reference of point_losses.
Vec point_losses_serial(const Mat& data, const surrogate::Surrogate& model, const weights::ImqWeight& w,
                        const Vec& theta);

/// Mean of the per-row contributions, reduced by a fixed pairwise tree.
double nsm_loss(const Vec& theta, const Mat& data, const surrogate::Surrogate& model, const weights::ImqWeight& w);

/// L(theta) = theta' A theta + 2 theta' B + C for an exponential-family surrogate.
struct ConjCoefficients {
  Mat A;
  Vec B;
  double C = 0.0;
  double n = 0.0;  // effective count (sum of multiplicities)

  double evaluate(const Vec& theta) const { return theta.dot(A * theta) + 2.0 * theta.dot(B) + C; }
};

/// Per-datum quadratic pieces, cached so that bootstrap resamples only reweight.
class ConjCache {
 public:
  ConjCache(const Mat& data, const surrogate::ExpFamEbm& model, const weights::ImqWeight& w);
  /// From precomputed per-datum pieces (b has one row per datum).
  ConjCache(std::vector<Mat> a, Mat b, std::vector<double> c);

  Index size() const { return static_cast<Index>(c_.size()); }
  /// Plain average over all data.
  ConjCoefficients coefficients() const;
  /// Multiplicity-weighted average; counts.size() == size().
  ConjCoefficients coefficients(const Vec& counts) const;

  const Mat& a(Index i) const { return a_[static_cast<std::size_t>(i)]; }
  Vec b(Index i) const { return b_.row(i).transpose(); }
  double c(Index i) const { return c_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<Mat> a_;
  Mat b_;  // n x d_theta
  std::vector<double> c_;
};

ConjCoefficients conj_coefficients(const Mat& data, const surrogate::ExpFamEbm& model, const weights::ImqWeight& w);

}  // namespace nsm::loss
