#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "nsm/core/error.hpp"
#include "nsm/core/parallel.hpp"
#include "nsm/metrics/metrics.hpp"
#include "toy.hpp"

using namespace nsm;
using namespace nsm::metrics;
using nsm::posterior::GaussianPosterior;
using nsm::posterior::GaussianPrior;

namespace {

GaussianPosterior gauss(Vec m, Mat c) {
  GaussianPosterior p;
  p.mean = std::move(m);
  p.cov = std::move(c);
  return p;
}

}  // namespace

TEST_CASE("mmd2: identical samples, plug-in and symmetry") {
  Rng rng = make_rng(1, 0);
  const Mat A = testutil::gaussian_data(120, Vec::Zero(3), rng);
  CHECK(mmd2(A, A) == 0.0);
  CHECK(mmd2_naive(A, A) == 0.0);

  const Mat a = Mat{{0.0, 1.0}}, b = Mat{{2.0, -1.0}};
  const double l = 1.7;
  CHECK(mmd2(a, b, {l}) == doctest::Approx(2 - 2 * std::exp(-8.0 / (2 * l * l))).epsilon(1e-15));

  const Mat B = testutil::gaussian_data(80, Vec::Constant(3, 0.4), rng);
  CHECK(mmd2(A, B) == doctest::Approx(mmd2(B, A)).epsilon(1e-14));
  CHECK(mmd2(A, B) >= -1e-12);
  CHECK_THROWS_AS(mmd2(Mat::Ones(5, 2), Mat::Ones(4, 2)), NumericError);
  CHECK_THROWS(mmd2(Mat(0, 2), B.leftCols(2)));
}

TEST_CASE("mmd2: blocked estimator equals the double loop") {
  Rng rng = make_rng(2, 0);
  const Mat A = testutil::gaussian_data(500, Vec::Zero(4), rng);
  const Mat B = testutil::gaussian_data(500, Vec::Constant(4, 0.2), rng);
  const double fast = mmd2(A, B), slow = mmd2_naive(A, B);
  CHECK(std::abs(fast - slow) < 1e-12);
  set_worker_count(3);
  CHECK(mmd2(A, B) == fast);
  set_worker_count(0);
}

TEST_CASE("median heuristic against a sorted oracle") {
  Rng rng = make_rng(3, 0);
  const Mat A = testutil::gaussian_data(21, Vec::Zero(2), rng);
  const Mat B = testutil::gaussian_data(10, Vec::Zero(2), rng);
  Mat Z(31, 2);
  Z << A, B;
  std::vector<double> d;
  for (Index i = 0; i < 31; ++i)
    for (Index j = i + 1; j < 31; ++j) d.push_back((Z.row(i) - Z.row(j)).squaredNorm());
  std::sort(d.begin(), d.end());
  // 465 pairs: odd count, the middle element
  CHECK(median_heuristic(A, B) == std::sqrt(d[232] / 2));
  const Mat C = testutil::gaussian_data(12, Vec::Zero(2), rng);
  std::vector<double> e;
  for (Index i = 0; i < 12; ++i)
    for (Index j = i + 1; j < 12; ++j) e.push_back((C.row(i) - C.row(j)).squaredNorm());
  std::sort(e.begin(), e.end());
  // 66 pairs: mean of the two middle values
  CHECK(median_heuristic(C.topRows(6), C.bottomRows(6)) == doctest::Approx(std::sqrt(0.5 * (e[32] + e[33]) / 2)));
}

TEST_CASE("mse") {
  const Vec ts{{1.0, 2.0, 3.0, 4.0}};
  CHECK(mse_samples(ts.transpose().replicate(10, 1), ts) == 0.0);
  CHECK(mse_conjugate(gauss(ts, Mat::Identity(4, 4)), ts) == 4.0);

  Rng rng = make_rng(4, 0);
  const Mat L = testutil::gaussian_data(4, Vec::Zero(4), rng);
  const Mat cov = L * L.transpose() + Mat::Identity(4, 4);
  const Vec mu{{0.5, 2.0, 2.0, 5.0}};
  GaussianPrior g(mu, cov);
  const Mat s = g.sample(100000, rng);
  const Vec sq = (s.rowwise() - ts.transpose()).rowwise().squaredNorm();
  const double se = std::sqrt((sq.array() - sq.mean()).square().mean() / 1e5);
  CHECK(std::abs(mse_samples(s, ts) - mse_conjugate(gauss(mu, cov), ts)) < 4 * se);
}

TEST_CASE("empirical coverage") {
  const Vec ts = Vec::Zero(2);
  std::vector<GaussianPosterior> tight(5, gauss(ts, Mat::Identity(2, 2) * 1e-4));
  CHECK(empirical_coverage(tight, ts) == 1.0);
  std::vector<GaussianPosterior> far(5, gauss(Vec::Constant(2, 100.0), Mat::Identity(2, 2)));
  CHECK(empirical_coverage(far, ts) == 0.0);

  Rng rng = make_rng(5, 0);
  std::vector<GaussianPosterior> posts;
  for (int r = 0; r < 1000; ++r) posts.push_back(gauss(testutil::gaussian_data(1, ts, rng).row(0).transpose(), Mat::Identity(2, 2)));
  CHECK(std::abs(empirical_coverage(posts, ts) - 0.95) <= 0.03);

  std::vector<Mat> draws{testutil::gaussian_data(500, ts, rng), testutil::gaussian_data(500, Vec::Constant(2, 50.0), rng)};
  CHECK(empirical_coverage(draws, ts) == 0.5);
}

TEST_CASE("gaussian kl") {
  CHECK(gaussian_kl(gauss(Vec::Zero(1), Mat::Identity(1, 1)), gauss(Vec::Ones(1), Mat::Identity(1, 1))) ==
        doctest::Approx(0.5).epsilon(1e-15));
  // KL(N(0,1) || N(0,4)) = 0.5 (1/4 - 1 + log 4)
  CHECK(gaussian_kl(gauss(Vec::Zero(1), Mat::Identity(1, 1)), gauss(Vec::Zero(1), Mat::Constant(1, 1, 4.0))) ==
        doctest::Approx(0.5 * (0.25 - 1 + std::log(4.0))).epsilon(1e-14));
  const auto p = gauss(Vec{{0.3, 0.1}}, Mat{{2.0, 0.3}, {0.3, 0.5}});
  CHECK(gaussian_kl(p, p) == 0.0);
  CHECK_THROWS_AS(gaussian_kl(p, gauss(Vec::Zero(2), Mat::Zero(2, 2))), NumericError);
}

TEST_CASE("pif kl probe: zero at the clean point, bounded under the IMQ weight") {
  Rng rng = make_rng(6, 0);
  surrogate::ExpFamEbm ebm(1, 2, surrogate::EbmConfig{{8}, {8}, false}, rng);
  Vec p = ebm.params();
  p += Vec(testutil::gaussian_data(p.size(), Vec::Zero(1), rng).col(0) * 0.3);
  ebm.set_params(p);
  const Mat data = testutil::gaussian_data(30, Vec::Zero(1), rng);
  const auto w = weights::ImqWeight::fit(data, 1.0, weights::ScatterMethod::median_mad, 0);
  GaussianPrior prior(Vec::Zero(2), Mat::Identity(2, 2));
  std::vector<Vec> grid{data.row(3).transpose()};
  for (int e = 1; e <= 6; ++e) grid.push_back(Vec::Constant(1, std::pow(10.0, e)));
  const Vec kl = pif_kl_probe(data, 3, grid, ebm, w, prior, 1.0);
  CHECK(kl(0) == 0.0);
  CHECK((kl.tail(6).array() > 0).all());
  CHECK(std::abs(kl(6) - kl(5)) < 0.01 * kl(5));
  CHECK_THROWS(pif_kl_probe(data, 30, grid, ebm, w, prior, 1.0));
}
