#include "nsm/weights/robust.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "nsm/calibrate/chi2.hpp"
#include "nsm/core/error.hpp"
#include "nsm/core/rng.hpp"

namespace nsm::weights {

namespace {

constexpr double kFloor = 1e-8;

// clip eigenvalues of a symmetric matrix at kFloor; returns true if any were clipped
bool floor_scatter(Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  Vec ev = es.eigenvalues();
  if (ev.minCoeff() >= kFloor) return false;
  ev = ev.cwiseMax(kFloor);
  S = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  S = 0.5 * (S + S.transpose());
  return true;
}

struct Fit {
  Vec mean;
  Mat cov;
  double logdet = 0.0;
  bool ok = false;
};

Fit subset_fit(const Mat& data, const std::vector<Index>& idx) {
  Fit f;
  const Index d = data.cols();
  f.mean = Vec::Zero(d);
  for (Index i : idx) f.mean += data.row(i).transpose();
  f.mean /= static_cast<double>(idx.size());
  f.cov = Mat::Zero(d, d);
  for (Index i : idx) {
    const Vec c = data.row(i).transpose() - f.mean;
    f.cov.noalias() += c * c.transpose();
  }
  f.cov /= static_cast<double>(idx.size());
  Eigen::LLT<Mat> llt(f.cov);
  if (llt.info() != Eigen::Success) return f;
  const Vec diag = Mat(llt.matrixL()).diagonal();
  if (diag.minCoeff() <= 0) return f;
  f.logdet = 2.0 * diag.array().log().sum();
  f.ok = std::isfinite(f.logdet) && diag.minCoeff() > 1e-150;
  return f;
}

Vec mahalanobis2(const Mat& data, const Fit& f) {
  Eigen::LLT<Mat> llt(f.cov);
  Mat C = (data.rowwise() - f.mean.transpose()).transpose();
  Mat Y = llt.matrixL().solve(C);
  return Y.colwise().squaredNorm().transpose();
}

std::vector<Index> smallest(const Vec& dist, Index h) {
  std::vector<Index> idx(static_cast<std::size_t>(dist.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::nth_element(idx.begin(), idx.begin() + h - 1, idx.end(), [&](Index a, Index b) {
    return dist(a) < dist(b) || (dist(a) == dist(b) && a < b);
  });
  idx.resize(static_cast<std::size_t>(h));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  const std::size_t n = v.size(), mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

ScatterMethod parse_scatter_method(const std::string& name) {
  if (name == "mcd") return ScatterMethod::mcd;
  if (name == "median-mad") return ScatterMethod::median_mad;
  if (name == "auto") return ScatterMethod::automatic;
  throw ConfigError("unknown scatter method '" + name + "' (expected mcd, median-mad or auto)");
}

std::string to_string(ScatterMethod m) {
  switch (m) {
    case ScatterMethod::mcd: return "mcd";
    case ScatterMethod::median_mad: return "median-mad";
    case ScatterMethod::automatic: return "auto";
  }
  return "auto";
}

LocationScatter median_mad(const Mat& data) {
  const Index n = data.rows(), d = data.cols();
  if (n < 2) throw std::invalid_argument("median-MAD needs at least two rows");
  LocationScatter out;
  out.method = ScatterMethod::median_mad;
  out.location.resize(d);
  out.scatter = Mat::Zero(d, d);
  for (Index j = 0; j < d; ++j) {
    std::vector<double> col(data.col(j).data(), data.col(j).data() + n);
    const double med = median(col);
    for (auto& v : col) v = std::abs(v - med);
    const double s = 1.4826 * median(col);
    out.location(j) = med;
    out.scatter(j, j) = s * s;
    if (!(out.scatter(j, j) >= kFloor)) {
      out.scatter(j, j) = kFloor;
      out.floored = true;
    }
  }
  if (out.floored) warn("median-MAD: zero spread in some coordinate; scatter floored at 1e-8");
  return out;
}

LocationScatter fast_mcd(const Mat& data, const McdOptions& opt) {
  const Index n = data.rows(), d = data.cols();
  if (n < d + 2) throw std::invalid_argument("MCD needs n >= d + 2");
  const Index h = (n + d + 2) / 2;  // ceil((n + d + 1) / 2)
  Rng rng = make_rng(opt.seed, label_id("fast-mcd"));

  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);

  // two C-steps from every elemental start, then iterate the ten best to convergence
  struct Candidate {
    Fit fit;
    std::vector<Index> subset;
  };
  auto csteps = [&](Candidate& c, int steps) {
    for (int step = 0; step < steps; ++step) {
      Fit g = subset_fit(data, c.subset);
      c.fit = g;
      if (!g.ok) return;
      std::vector<Index> next = smallest(mahalanobis2(data, g), h);
      const bool same = next == c.subset;
      c.subset = std::move(next);
      if (same) return;
    }
    c.fit = subset_fit(data, c.subset);
  };

  std::vector<Candidate> pool;
  Fit singular;
  for (int s = 0; s < opt.starts && !singular.cov.size(); ++s) {
    std::shuffle(all.begin(), all.end(), rng);
    Index take = d + 1;
    std::vector<Index> subset(all.begin(), all.begin() + take);
    Fit f = subset_fit(data, subset);
    while (!f.ok && take < n) {
      subset.push_back(all[static_cast<std::size_t>(take++)]);
      f = subset_fit(data, subset);
    }
    if (!f.ok) {  // every point lies in a lower-dimensional set
      singular = f;
      break;
    }
    Candidate c{f, smallest(mahalanobis2(data, f), h)};
    csteps(c, 2);
    if (!c.fit.ok) singular = c.fit;  // an h-subset with zero determinant is optimal
    else pool.push_back(std::move(c));
  }
  Fit best;
  best.logdet = std::numeric_limits<double>::infinity();
  if (!singular.cov.size()) {
    std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) { return a.fit.logdet < b.fit.logdet; });
    if (pool.size() > 10) pool.resize(10);
    for (auto& c : pool) {
      csteps(c, opt.max_csteps);
      if (!c.fit.ok) {
        singular = c.fit;
        break;
      }
      if (c.fit.logdet < best.logdet) best = c.fit;
    }
  }
  if (singular.cov.size()) best = singular;

  LocationScatter out;
  out.method = ScatterMethod::mcd;
  if (!best.ok) {
    // exact fit: the covariance of the best subset is singular
    out.location = best.mean;
    out.scatter = best.cov;
    out.floored = floor_scatter(out.scatter);
    warn("MCD: singular covariance of the best subset; scatter floored at 1e-8");
    return out;
  }
  const double q = static_cast<double>(h) / static_cast<double>(n);
  const double factor = q < 1.0 ? q / chi2_cdf(chi2_quantile(q, static_cast<double>(d)), static_cast<double>(d + 2)) : 1.0;
  const Fit raw{best.mean, factor * best.cov, 0.0, true};

  // reweighting: keep points with squared distance below the 0.975 chi-square quantile
  const double cut = chi2_quantile(0.975, static_cast<double>(d));
  const Vec dist = mahalanobis2(data, raw);
  std::vector<Index> keep;
  for (Index i = 0; i < n; ++i)
    if (dist(i) <= cut) keep.push_back(i);
  Fit rw = subset_fit(data, keep);
  if (rw.ok && static_cast<Index>(keep.size()) > d) {
    const double qk = 0.975;
    rw.cov *= qk / chi2_cdf(cut, static_cast<double>(d + 2));
    out.location = rw.mean;
    out.scatter = rw.cov;
  } else {
    out.location = raw.mean;
    out.scatter = raw.cov;
  }
  out.floored = floor_scatter(out.scatter);
  if (out.floored) warn("MCD: near-singular scatter floored at 1e-8");
  return out;
}

LocationScatter robust_location_scatter(const Mat& data, ScatterMethod method, std::uint64_t seed) {
  const Index n = data.rows(), d = data.cols();
  if (method == ScatterMethod::automatic) method = (d <= 10 && n >= 50) ? ScatterMethod::mcd : ScatterMethod::median_mad;
  if (method == ScatterMethod::mcd) {
    McdOptions opt;
    opt.seed = seed;
    return fast_mcd(data, opt);
  }
  return median_mad(data);
}

}  // namespace nsm::weights
