#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fd.hpp"
#include "nsm/core/error.hpp"
#include "nsm/surrogate/ebm.hpp"
#include "nsm/surrogate/maf.hpp"
#include "nsm/surrogate/mdn.hpp"
#include "nsm/train/train.hpp"

using namespace nsm;
using namespace nsm::surrogate;
using namespace nsm::train;

namespace {

// theta ~ N(0, 1), x | theta ~ N(theta, 1)
void gaussian_pairs(Index m, std::uint64_t seed, Mat& theta, Mat& x) {
  Rng rng = make_rng(seed, 3);
  std::normal_distribution<double> n01;
  theta.resize(m, 1);
  x.resize(m, 1);
  for (Index i = 0; i < m; ++i) {
    theta(i, 0) = n01(rng);
    x(i, 0) = theta(i, 0) + n01(rng);
  }
}

}  // namespace

TEST_CASE("standardizer round trip") {
  Rng rng = make_rng(1, 0);
  std::normal_distribution<double> n01;
  Mat X(50, 3);
  for (Index i = 0; i < X.size(); ++i) X.data()[i] = 5 + 100 * n01(rng);
  auto s = Standardizer::fit(X);
  CHECK((s.inverse_rows(s.transform_rows(X)) - X).cwiseAbs().maxCoeff() < 1e-12 * X.cwiseAbs().maxCoeff());
  CHECK(s.scale.minCoeff() > 0);
  Mat Z = s.transform_rows(X);
  CHECK(Z.colwise().mean().norm() < 1e-12);
}

TEST_CASE("MDN learns the conditional mean of a Gaussian model") {
  Mat theta, x;
  gaussian_pairs(20000, 1, theta, x);
  Rng rng = make_rng(2, 0);
  Mdn mdn(1, 1, MdnConfig{1, {50, 50}, 1e-4}, rng);
  TrainConfig cfg;
  cfg.learning_rate = 2e-3;
  cfg.max_epochs = 60;
  cfg.seed = 2;
  auto rep = fit_nle(mdn, theta, x, cfg);
  double mae = 0;
  int count = 0;
  for (double t = -2; t <= 2.0001; t += 0.25, ++count) mae += std::abs(mdn.mixture(Vec::Constant(1, t)).means(0, 0) - t);
  CHECK(mae / count < 0.1);
  // early-stopping contract
  CHECK(rep.best_val_loss <= rep.final_val_loss);
  CHECK(rep.val_loss[static_cast<std::size_t>(rep.best_epoch)] == rep.best_val_loss);
  if (rep.stopped_early) CHECK(static_cast<int>(rep.val_loss.size()) - 1 - rep.best_epoch == cfg.patience);
}

TEST_CASE("training is deterministic for a fixed seed") {
  Mat theta, x;
  gaussian_pairs(600, 3, theta, x);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.seed = 9;
  Vec first;
  for (int rep = 0; rep < 2; ++rep) {
    Rng rng = make_rng(4, 0);
    Maf maf(1, 1, MafConfig{2, {8}}, rng);
    fit_nle(maf, theta, x, cfg);
    if (rep == 0)
      first = maf.params();
    else
      CHECK(maf.params() == first);
  }
}

TEST_CASE("score-matching gradient matches finite differences") {
  Rng rng = make_rng(5, 0);
  std::normal_distribution<double> n01;
  Mat Z(16, 2), Th(16, 3);
  for (Index i = 0; i < Z.size(); ++i) Z.data()[i] = n01(rng);
  for (Index i = 0; i < Th.size(); ++i) Th.data()[i] = n01(rng);
  for (auto hidden : {std::vector<Index>{4}, std::vector<Index>{}}) {
    ExpFamEbm ebm(2, 3, EbmConfig{hidden, {4}, false}, rng);
    const Vec p = ebm.params();
    auto [v, g] = objective_and_gradient(ebm, p, Z, Th);
    auto f = [&](const Vec& q) { return objective_and_gradient(ebm, q, Z, Th).first; };
    const Vec fd = testutil::fd_gradient(f, p, 1e-5);
    CHECK(testutil::rel_err(g, fd, 1e-3) < 1e-5);
    // sample order does not matter
    Eigen::PermutationMatrix<Eigen::Dynamic> P(16);
    P.setIdentity();
    std::shuffle(P.indices().data(), P.indices().data() + 16, rng);
    CHECK(objective_and_gradient(ebm, p, P * Z, P * Th).first == doctest::Approx(v).epsilon(1e-14));
  }
}

TEST_CASE("EBM with linear T recovers the Gaussian score") {
  Mat theta, x;
  gaussian_pairs(20000, 6, theta, x);
  Rng rng = make_rng(7, 0);
  ExpFamEbm ebm(1, 1, EbmConfig{{}, {128}, false}, rng);
  TrainConfig cfg;
  cfg.learning_rate = 2e-3;
  cfg.max_epochs = 60;
  cfg.seed = 7;
  fit_score_matching(ebm, theta, x, cfg);
  double mae = 0;
  int count = 0;
  for (double t = -1.5; t <= 1.5001; t += 0.5)
    for (double xv = -2.0; xv <= 2.0001; xv += 0.5, ++count)
      mae += std::abs(ebm.score_x(Vec::Constant(1, xv), Vec::Constant(1, t))(0) + (xv - t));
  CHECK(mae / count < 0.1);
}

TEST_CASE("fitted one-dimensional flow is normalised and samples match its CDF") {
  // x | theta ~ skewed: exp(theta + 0.5 u) with u ~ N(0,1)
  Rng rng = make_rng(8, 0);
  std::normal_distribution<double> n01;
  Mat theta(4000, 1), x(4000, 1);
  for (Index i = 0; i < 4000; ++i) {
    theta(i, 0) = 0.3 * n01(rng);
    x(i, 0) = std::exp(theta(i, 0) + 0.5 * n01(rng));
  }
  Maf maf(1, 1, MafConfig{3, {16, 16}}, rng);
  TrainConfig cfg;
  cfg.learning_rate = 2e-3;
  cfg.max_epochs = 40;
  cfg.seed = 8;
  fit_nle(maf, theta, x, cfg);
  const Vec th = Vec::Constant(1, 0.1);
  // trapezoid quadrature over a wide grid
  const double lo = -15, hi = 25;
  const int N = 40001;
  const double h = (hi - lo) / (N - 1);
  std::vector<double> grid(N), pdf(N), cdf(N);
  for (int i = 0; i < N; ++i) {
    grid[i] = lo + i * h;
    pdf[i] = std::exp(maf.log_density(Vec::Constant(1, grid[i]), th));
  }
  cdf[0] = 0;
  for (int i = 1; i < N; ++i) cdf[i] = cdf[i - 1] + 0.5 * h * (pdf[i] + pdf[i - 1]);
  CHECK(std::abs(cdf.back() - 1.0) < 1e-3);
  // Kolmogorov distance between 1e5 draws and the quadrature CDF
  Rng srng = make_rng(9, 0);
  Mat draws = maf.sample(th, 100000, srng);
  std::vector<double> s(draws.data(), draws.data() + draws.size());
  std::sort(s.begin(), s.end());
  double ks = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double pos = (s[i] - lo) / h;
    const int k = std::clamp(static_cast<int>(pos), 0, N - 2);
    const double F = (cdf[k] + (pos - k) * (cdf[k + 1] - cdf[k])) / cdf.back();
    ks = std::max({ks, std::abs(F - static_cast<double>(i) / s.size()), std::abs(F - static_cast<double>(i + 1) / s.size())});
  }
  CHECK(ks < 0.02);
}

TEST_CASE("training rejects bad configurations") {
  Mat theta, x;
  gaussian_pairs(50, 1, theta, x);
  Rng rng = make_rng(10, 0);
  Mdn mdn(1, 1, MdnConfig{1, {4}, 1e-4}, rng);
  CHECK_THROWS_AS(fit_nle(mdn, theta, x, TrainConfig{}), ConfigError);
  TrainConfig bad;
  bad.val_fraction = 1.5;
  bad.batch_size = 10;
  CHECK_THROWS_AS(fit_nle(mdn, theta, x, bad), ConfigError);
  ExpFamEbm ebm(1, 1, EbmConfig{}, rng);
  TrainConfig small;
  small.batch_size = 10;
  CHECK_THROWS_AS(fit_nle(ebm, theta, x, small), ConfigError);
}
