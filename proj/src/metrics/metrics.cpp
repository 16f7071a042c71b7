#include "nsm/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "nsm/calibrate/calibrate.hpp"
#include "nsm/core/error.hpp"
#include "nsm/core/parallel.hpp"
#include "nsm/posterior/posterior.hpp"

namespace nsm::metrics {

namespace {

constexpr Index kBlock = 64;

double lengthscale_for(const Mat& A, const Mat& B, const Mmd2Config& cfg) {
  if (A.rows() == 0 || B.rows() == 0) throw std::invalid_argument("mmd2: both samples need at least one point");
  if (A.cols() != B.cols()) throw std::invalid_argument("mmd2: dimension mismatch");
  return cfg.lengthscale > 0 ? cfg.lengthscale : median_heuristic(A, B);
}

// Sum of k(x_i, y_j) over all pairs. Each row block of X yields one partial sum,
// and partials are combined in a fixed tree so the result is thread-count independent.
double kernel_sum(const Mat& X, const Mat& Y, double inv2l2) {
  const Index nb = (X.rows() + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<std::size_t>(nb), 0.0);
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (Index blk = 0; blk < nb; ++blk) {
    const Index lo = blk * kBlock, hi = std::min(X.rows(), lo + kBlock);
    double s = 0.0;
    for (Index i = lo; i < hi; ++i) {
      double row = 0.0;
      for (Index j = 0; j < Y.rows(); ++j) row += std::exp(-(X.row(i) - Y.row(j)).squaredNorm() * inv2l2);
      s += row;
    }
    partial[static_cast<std::size_t>(blk)] = s;
  }
  return pairwise_sum(partial);
}

}  // namespace

double median_heuristic(const Mat& A, const Mat& B) {
  Mat Z(A.rows() + B.rows(), A.cols());
  Z << A, B;
  const Index n = Z.rows();
  if (n < 2) throw NumericError("median heuristic: need at least two points");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) d.push_back((Z.row(i) - Z.row(j)).squaredNorm());
  const auto mid = d.begin() + static_cast<long>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  const double l = std::sqrt(med / 2.0);
  if (!(l > 0)) throw NumericError("median heuristic: lengthscale is zero (all points coincide)");
  return l;
}

double mmd2(const Mat& A, const Mat& B, const Mmd2Config& cfg) {
  const double l = lengthscale_for(A, B, cfg);
  const double g = 1.0 / (2.0 * l * l);
  const double n1 = static_cast<double>(A.rows()), n2 = static_cast<double>(B.rows());
  return kernel_sum(A, A, g) / (n1 * n1) - 2.0 * kernel_sum(A, B, g) / (n1 * n2) + kernel_sum(B, B, g) / (n2 * n2);
}

double mmd2_naive(const Mat& A, const Mat& B, const Mmd2Config& cfg) {
  const double l = lengthscale_for(A, B, cfg);
  auto k = [&](const auto& x, const auto& y) { return std::exp(-(x - y).squaredNorm() / (2.0 * l * l)); };
  double saa = 0, sab = 0, sbb = 0;
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.rows(); ++j) saa += k(A.row(i), A.row(j));
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < B.rows(); ++j) sab += k(A.row(i), B.row(j));
  for (Index i = 0; i < B.rows(); ++i)
    for (Index j = 0; j < B.rows(); ++j) sbb += k(B.row(i), B.row(j));
  const double n1 = static_cast<double>(A.rows()), n2 = static_cast<double>(B.rows());
  return saa / (n1 * n1) - 2.0 * sab / (n1 * n2) + sbb / (n2 * n2);
}

double mse_samples(const Mat& samples, const Vec& theta_star) {
  if (samples.cols() != theta_star.size() || samples.rows() == 0) throw std::invalid_argument("mse: shape mismatch");
  return (samples.rowwise() - theta_star.transpose()).rowwise().squaredNorm().mean();
}

double mse_conjugate(const posterior::GaussianPosterior& post, const Vec& theta_star) {
  if (post.dim() != theta_star.size()) throw std::invalid_argument("mse: shape mismatch");
  return (post.mean - theta_star).squaredNorm() + post.cov.trace();
}

double empirical_coverage(const std::vector<posterior::GaussianPosterior>& posts, const Vec& theta_star,
                          double alpha) {
  if (posts.empty()) throw std::invalid_argument("coverage: no posteriors");
  double hits = 0;
  for (const auto& p : posts) hits += calibrate::credible_region_contains(p, theta_star, alpha) ? 1.0 : 0.0;
  return hits / static_cast<double>(posts.size());
}

double empirical_coverage(const std::vector<Mat>& samples, const Vec& theta_star, double alpha) {
  std::vector<posterior::GaussianPosterior> posts;
  posts.reserve(samples.size());
  for (const Mat& s : samples) posts.push_back(posterior::GaussianPosterior::from_samples(s));
  return empirical_coverage(posts, theta_star, alpha);
}

double gaussian_kl(const posterior::GaussianPosterior& p, const posterior::GaussianPosterior& q) {
  const Index d = p.dim();
  if (q.dim() != d) throw std::invalid_argument("kl: dimension mismatch");
  if (p.mean == q.mean && p.cov == q.cov) {
    posterior::spd_factor(p.cov, "covariance");
    return 0.0;
  }
  const auto lq = posterior::spd_factor(q.cov, "contaminated covariance");
  const auto lp = posterior::spd_factor(p.cov, "clean covariance");
  const Vec dm = q.mean - p.mean;
  const double tr = lq.solve(p.cov).trace();
  const double maha = dm.dot(lq.solve(dm));
  const double logdet_q = 2.0 * Mat(lq.matrixL()).diagonal().array().log().sum();
  const double logdet_p = 2.0 * Mat(lp.matrixL()).diagonal().array().log().sum();
  return 0.5 * (tr - static_cast<double>(d) + maha + logdet_q - logdet_p);
}

Vec pif_kl_probe(const Mat& data, Index replaced, const std::vector<Vec>& contaminants,
                 const surrogate::ExpFamEbm& model, const weights::ImqWeight& w,
                 const posterior::GaussianPrior& prior, double beta) {
  if (replaced < 0 || replaced >= data.rows()) throw std::invalid_argument("pif probe: replaced index out of range");
  const loss::ConjCache clean(data, model, w);
  const auto base = posterior::nsm_conj_posterior(prior, clean.coefficients(), beta);
  Vec out(static_cast<Index>(contaminants.size()));
  Mat d = data;
  for (std::size_t k = 0; k < contaminants.size(); ++k) {
    if (contaminants[k].size() != data.cols()) throw std::invalid_argument("pif probe: contaminant dimension mismatch");
    d.row(replaced) = contaminants[k].transpose();
    const auto post = posterior::nsm_conj_posterior(prior, loss::conj_coefficients(d, model, w), beta);
    out(static_cast<Index>(k)) = gaussian_kl(base, post);
  }
  return out;
}

}  // namespace nsm::metrics
