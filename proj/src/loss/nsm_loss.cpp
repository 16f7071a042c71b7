#include "nsm/loss/nsm_loss.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <string>

#include "nsm/core/error.hpp"
#include "nsm/core/parallel.hpp"

namespace nsm::loss {

namespace {

std::string row_error(Index i, const std::string& what) {
  return "nsm loss: non-finite " + what + " at datum " + std::to_string(i);
}

double checked_point(const surrogate::Surrogate& model, const weights::ImqWeight& w, const Mat& data, Index i,
                     const Vec& theta) {
  const Vec x = data.row(i).transpose();
  const surrogate::ScoreTrace st = model.score_trace(x, theta);
  if (!st.score.allFinite() || !std::isfinite(st.trace)) throw NumericError(row_error(i, "score/trace"));
  const auto wv = w.eval(x);
  const double v = wv.w2 * st.score.squaredNorm() + 2.0 * wv.grad_w2.dot(st.score) + 2.0 * wv.w2 * st.trace;
  if (!std::isfinite(v)) throw NumericError(row_error(i, "loss"));
  return v;
}

}  // namespace

double point_loss(const surrogate::Surrogate& model, const weights::ImqWeight& w, const Vec& x, const Vec& theta) {
  const surrogate::ScoreTrace st = model.score_trace(x, theta);
  const auto wv = w.eval(x);
  return wv.w2 * st.score.squaredNorm() + 2.0 * wv.grad_w2.dot(st.score) + 2.0 * wv.w2 * st.trace;
}

Vec point_losses_serial(const Mat& data, const surrogate::Surrogate& model, const weights::ImqWeight& w,
                        const Vec& theta) {
  Vec out(data.rows());
  for (Index i = 0; i < data.rows(); ++i) out(i) = checked_point(model, w, data, i, theta);
  return out;
}

Vec point_losses(const Mat& data, const surrogate::Surrogate& model, const weights::ImqWeight& w, const Vec& theta) {
  const Index n = data.rows();
  Vec out(n);
  std::atomic<Index> first_bad{std::numeric_limits<Index>::max()};
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (Index i = 0; i < n; ++i) {
    try {
      out(i) = checked_point(model, w, data, i, theta);
    } catch (...) {
      Index cur = first_bad.load();
      while (i < cur && !first_bad.compare_exchange_weak(cur, i)) {
      }
    }
  }
  if (first_bad.load() != std::numeric_limits<Index>::max())
    checked_point(model, w, data, first_bad.load(), theta);  // rethrows on the calling thread
  return out;
}

double nsm_loss(const Vec& theta, const Mat& data, const surrogate::Surrogate& model, const weights::ImqWeight& w) {
  if (data.rows() == 0) throw std::invalid_argument("nsm loss: empty dataset");
  const Vec l = point_losses(data, model, w, theta);
  return pairwise_sum(std::span<const double>(l.data(), static_cast<std::size_t>(l.size()))) /
         static_cast<double>(data.rows());
}

ConjCache::ConjCache(const Mat& data, const surrogate::ExpFamEbm& model, const weights::ImqWeight& w) {
  const Index n = data.rows(), p = model.theta_dim();
  a_.assign(static_cast<std::size_t>(n), Mat());
  b_.resize(n, p);
  c_.assign(static_cast<std::size_t>(n), 0.0);
  std::atomic<bool> bad{false};
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (Index i = 0; i < n; ++i) {
    const Vec x = data.row(i).transpose();
    const surrogate::EbmFeatures f = model.features(x);
    const auto wv = w.eval(x);
    Mat a = wv.w2 * (f.grad_T * f.grad_T.transpose());
    Vec b = wv.w2 * (f.grad_T * f.grad_b) + f.grad_T * wv.grad_w2 + wv.w2 * f.lap_T;
    const double c = wv.w2 * f.grad_b.squaredNorm() + 2.0 * wv.grad_w2.dot(f.grad_b) + 2.0 * wv.w2 * f.lap_b;
    if (!a.allFinite() || !b.allFinite() || !std::isfinite(c)) bad = true;
    a_[static_cast<std::size_t>(i)] = std::move(a);
    b_.row(i) = b.transpose();
    c_[static_cast<std::size_t>(i)] = c;
  }
  if (bad) {
    for (Index i = 0; i < n; ++i)
      if (!a_[static_cast<std::size_t>(i)].allFinite() || !b_.row(i).allFinite() || !std::isfinite(c_[static_cast<std::size_t>(i)]))
        throw NumericError(row_error(i, "conjugate coefficient"));
  }
}

ConjCache::ConjCache(std::vector<Mat> a, Mat b, std::vector<double> c) : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)) {
  const auto n = c_.size();
  if (a_.size() != n || static_cast<std::size_t>(b_.rows()) != n) throw std::invalid_argument("conj cache: length mismatch");
  for (const Mat& ai : a_)
    if (ai.rows() != b_.cols() || ai.cols() != b_.cols()) throw std::invalid_argument("conj cache: shape mismatch");
}

ConjCoefficients ConjCache::coefficients() const { return coefficients(Vec::Ones(size())); }

ConjCoefficients ConjCache::coefficients(const Vec& counts) const {
  if (counts.size() != size()) throw std::invalid_argument("conj cache: count vector has the wrong length");
  const Index p = b_.cols();
  ConjCoefficients out;
  out.A = Mat::Zero(p, p);
  out.B = Vec::Zero(p);
  out.n = counts.sum();
  if (!(out.n > 0)) throw std::invalid_argument("conj cache: counts sum to zero");
  for (Index i = 0; i < size(); ++i) {
    const double k = counts(i);
    if (k == 0.0) continue;
    out.A += k * a_[static_cast<std::size_t>(i)];
    out.B += k * b_.row(i).transpose();
    out.C += k * c_[static_cast<std::size_t>(i)];
  }
  out.A /= out.n;
  out.A = 0.5 * (out.A + out.A.transpose());
  out.B /= out.n;
  out.C /= out.n;
  return out;
}

ConjCoefficients conj_coefficients(const Mat& data, const surrogate::ExpFamEbm& model, const weights::ImqWeight& w) {
  return ConjCache(data, model, w).coefficients();
}

}  // namespace nsm::loss
