#include <doctest.h>

#include <cmath>
#include <limits>

#include "mc.hpp"
#include "nsm/calibrate/chi2.hpp"
#include "nsm/core/error.hpp"
#include "nsm/sampler/slice.hpp"

using namespace nsm;
using nsm::sampler::SliceConfig;
using nsm::sampler::slice_sample;

TEST_CASE("slice sampler: standard normal moments") {
  Rng rng = make_rng(3, 1);
  SliceConfig cfg{Vec::Ones(1)};
  const Mat s = slice_sample([](const Vec& t) { return -0.5 * t.squaredNorm(); }, Vec::Zero(1), 50000, cfg, rng);
  const Vec c = s.col(0);
  const double mean = c.mean();
  const double var = (c.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("slice sampler: shifted bivariate normal within 4 SE") {
  Rng rng = make_rng(4, 1);
  const Vec mu = Vec{{3.0, -1.5}};
  SliceConfig cfg{Vec::Ones(2)};
  const Mat s = slice_sample([&](const Vec& t) { return -0.5 * (t - mu).squaredNorm(); }, Vec::Zero(2), 20000, cfg, rng);
  for (Index j = 0; j < 2; ++j) {
    const Vec c = s.col(j);
    CHECK(std::abs(c.mean() - mu(j)) < 4.0 * testutil::batch_se(c));
  }
}

TEST_CASE("slice sampler: same seed gives bit-identical chains") {
  auto logp = [](const Vec& t) { return -0.5 * t.squaredNorm() - 0.1 * std::pow(t(0), 4); };
  SliceConfig cfg{Vec::Constant(3, 0.7)};
  cfg.warmup = 50;
  Rng a = make_rng(9, 2), b = make_rng(9, 2), c = make_rng(10, 2);
  const Mat sa = slice_sample(logp, Vec::Zero(3), 300, cfg, a);
  const Mat sb = slice_sample(logp, Vec::Zero(3), 300, cfg, b);
  const Mat sc = slice_sample(logp, Vec::Zero(3), 300, cfg, c);
  CHECK(sa == sb);
  CHECK(sa != sc);
}

TEST_CASE("slice sampler: invalid starts and configs") {
  Rng rng = make_rng(1, 1);
  SliceConfig cfg{Vec::Ones(1)};
  auto logp = [](const Vec& t) { return t(0) < 0 ? -std::numeric_limits<double>::infinity() : -t(0); };
  CHECK_THROWS_AS(slice_sample(logp, Vec::Constant(1, -1.0), 10, cfg, rng), NumericError);
  SliceConfig bad{Vec::Zero(1)};
  CHECK_THROWS(slice_sample(logp, Vec::Ones(1), 10, bad, rng));
  SliceConfig wrong{Vec::Ones(2)};
  CHECK_THROWS(slice_sample(logp, Vec::Ones(1), 10, wrong, rng));
}

TEST_CASE("slice sampler: thinning and step-out exhaustion") {
  Rng rng = make_rng(2, 1);
  SliceConfig cfg{Vec::Constant(1, 1e-3)};
  cfg.max_steps = 2;
  cfg.warmup = 0;
  cfg.thin = 3;
  sampler::SliceStats stats;
  const Mat s = slice_sample([](const Vec& t) { return -0.5 * t.squaredNorm(); }, Vec::Zero(1), 20, cfg, rng, &stats);
  CHECK(s.rows() == 20);
  CHECK(stats.exhausted_brackets > 0);
  CHECK(stats.evaluations > 60);
}

TEST_CASE("slice sampler: histogram matches a discrete-grid target") {
  // bimodal 1-D target; bins of the grid carry their integrated mass
  auto logp = [](const Vec& t) {
    const double x = t(0);
    return std::log(0.3 * std::exp(-0.5 * (x + 1.5) * (x + 1.5) / 0.25) + 0.7 * std::exp(-0.5 * (x - 1.0) * (x - 1.0)));
  };
  const double lo = -3.5, hi = 3.5;
  const int bins = 14;
  const double h = (hi - lo) / bins;
  Vec mass = Vec::Zero(bins + 2);  // two tail bins
  const int fine = 400;
  double total = 0.0;
  for (double x = -12.0; x < 12.0; x += h / fine) {
    const double p = std::exp(logp(Vec::Constant(1, x + 0.5 * h / fine))) * h / fine;
    total += p;
    const int k = x + 0.5 * h / fine < lo ? 0 : x + 0.5 * h / fine >= hi ? bins + 1 : 1 + static_cast<int>((x + 0.5 * h / fine - lo) / h);
    mass(std::min(k, bins + 1)) += p;
  }
  mass /= total;

  int passed = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(static_cast<std::uint64_t>(seed), 77);
    SliceConfig cfg{Vec::Ones(1)};
    cfg.thin = 10;  // near-independent draws for the chi-square reference
    const Index n = 5000;
    const Mat s = slice_sample(logp, Vec::Zero(1), n, cfg, rng);
    Vec counts = Vec::Zero(bins + 2);
    for (Index i = 0; i < n; ++i) {
      const double x = s(i, 0);
      const int k = x < lo ? 0 : x >= hi ? bins + 1 : 1 + static_cast<int>((x - lo) / h);
      counts(std::min(k, bins + 1)) += 1;
    }
    double stat = 0.0;
    int used = 0;
    for (Index k = 0; k < bins + 2; ++k) {
      const double e = mass(k) * static_cast<double>(n);
      if (e < 5) continue;
      stat += (counts(k) - e) * (counts(k) - e) / e;
      ++used;
    }
    const double p = 1.0 - chi2_cdf(stat, used - 1);
    if (p > 0.01) ++passed;
  }
  CHECK(passed >= 19);
}
