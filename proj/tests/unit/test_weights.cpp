#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>

#include "fd.hpp"
#include "nsm/calibrate/chi2.hpp"
#include "nsm/core/rng.hpp"
#include "nsm/weights/imq.hpp"

using namespace nsm;
using namespace nsm::weights;

TEST_CASE("chi-square quantiles agree with Boost") {
  for (int dof = 1; dof <= 12; ++dof)
    for (double p : {0.001, 0.05, 0.3, 0.5, 0.9, 0.95, 0.999}) {
      boost::math::chi_squared dist(dof);
      const double ref = boost::math::quantile(dist, p);
      CHECK(chi2_quantile(p, dof) == doctest::Approx(ref).epsilon(1e-10));
      CHECK(chi2_cdf(ref, dof) == doctest::Approx(p).epsilon(1e-12));
    }
  CHECK(chi2_quantile(0.95, 1) == doctest::Approx(3.8415).epsilon(1e-4));
}

TEST_CASE("IMQ weight at its centre and a plug-in point") {
  ImqWeight w(2.0, Vec::Zero(2), Mat::Identity(2, 2));
  CHECK(w.weight(Vec::Zero(2)) == 1.0);
  CHECK(w.weight_sq_grad(Vec::Zero(2)).isZero(0));
  Vec x(2);
  x << 0.6, 0.8;
  CHECK(w.weight(x) == doctest::Approx(std::pow(2.0, -0.5)).epsilon(1e-15));
}

TEST_CASE("grad of w^2 matches finite differences") {
  Rng rng = make_rng(1, 0);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 50; ++t) {
    Mat A(3, 3);
    for (Index i = 0; i < 9; ++i) A.data()[i] = n01(rng);
    Mat S = A * A.transpose() + 0.5 * Mat::Identity(3, 3);
    Vec nu(3), x(3);
    for (Index i = 0; i < 3; ++i) {
      nu(i) = n01(rng);
      x(i) = nu(i) + 2 * n01(rng);
    }
    const double zeta = 0.5 + t % 4;
    ImqWeight w(zeta, nu, S);
    auto w2 = [&](const Vec& y) { return std::pow(w.weight(y), 2); };
    const Vec fd = testutil::fd_gradient(w2, x, 1e-6);
    CHECK(testutil::rel_err(w.weight_sq_grad(x), fd, 1e-8) < 1e-8);
  }
}

TEST_CASE("IMQ weight decreases in the radius and its gradient stays bounded") {
  Mat S(2, 2);
  S << 2.0, 0.3, 0.3, 0.5;
  Vec nu(2);
  nu << 1.0, -1.0;
  for (double zeta : {0.5, 1.0, 2.0}) {
    ImqWeight w(zeta, nu, S);
    const double bound = w.grad_bound();
    Vec dir(2);
    dir << 0.3, -0.95;
    double prev = 1.0;
    for (int k = 0; k <= 400; ++k) {
      const double r = std::pow(10.0, -4.0 + 12.0 * k / 400.0);
      const Vec x = nu + r * dir;
      const double wx = w.weight(x);
      CHECK(wx <= prev);
      CHECK(wx > 0.0);
      prev = wx;
      CHECK(w.weight_sq_grad(x).norm() <= bound);
    }
    CHECK(prev < 1e-3);
  }
  ImqWeight one = ImqWeight::constant(2);
  CHECK(one.weight(Vec::Constant(2, 1e9)) == 1.0);
  CHECK(one.weight_sq_grad(Vec::Constant(2, 3.0)).isZero(0));
}

TEST_CASE("median-MAD hand example and degenerate data") {
  Mat d(5, 1);
  d << 1, 2, 3, 4, 100;
  auto ls = median_mad(d);
  CHECK(ls.location(0) == 3.0);
  CHECK(ls.scatter(0, 0) == doctest::Approx(1.4826 * 1.4826).epsilon(1e-15));
  CHECK_FALSE(ls.floored);

  Mat same = Mat::Constant(60, 2, 4.5);
  for (auto m : {ScatterMethod::mcd, ScatterMethod::median_mad}) {
    auto r = robust_location_scatter(same, m, 1);
    CHECK(r.location == Vec::Constant(2, 4.5));
    CHECK(r.floored);
    CHECK((r.scatter - 1e-8 * Mat::Identity(2, 2)).norm() < 1e-20);
  }
}

TEST_CASE("MCD resists 10 percent contamination") {
  int mcd_ok = 0, mean_bad = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = make_rng(seed, 42);
    std::normal_distribution<double> n01;
    const Index n = 500, n_out = 50;
    Mat X(n, 2);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < 2; ++j) X(i, j) = n01(rng) + (i < n_out ? 10.0 : 0.0);
    auto ls = fast_mcd(X, McdOptions{200, 30, seed});
    const double se = 1.0 / std::sqrt(static_cast<double>(n - n_out));
    const Vec mean = X.colwise().mean().transpose();
    if (ls.location.cwiseAbs().maxCoeff() < 5 * se) ++mcd_ok;
    if (mean.cwiseAbs().maxCoeff() > 5 * se) ++mean_bad;
  }
  CHECK(mcd_ok == 100);
  CHECK(mean_bad == 100);
}

TEST_CASE("MCD consistency factor gives unbiased scatter on clean data") {
  Rng rng = make_rng(3, 0);
  std::normal_distribution<double> n01;
  Mat X(4000, 2);
  for (Index i = 0; i < X.size(); ++i) X.data()[i] = n01(rng) * 2.0;
  auto ls = fast_mcd(X, McdOptions{50, 30, 3});
  CHECK(ls.scatter(0, 0) == doctest::Approx(4.0).epsilon(0.1));
  CHECK(ls.scatter(1, 1) == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("weight serialises") {
  ImqWeight w(1.0, Vec::Ones(2), 2.0 * Mat::Identity(2, 2));
  auto back = ImqWeight::from_json(w.to_json());
  CHECK(back.weight(Vec::Zero(2)) == w.weight(Vec::Zero(2)));
  CHECK(ImqWeight::from_json(ImqWeight::constant(3).to_json()).is_constant());
}
