#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "nsm/core/error.hpp"
#include "nsm/simulators/simulators.hpp"

using namespace nsm;
using namespace nsm::sim;

namespace {

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nsm_sim_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("g-and-k generator") {
  CHECK(gandk_quantile(0.0, 1.7, 2.0, 0.3, 0.1) == 1.7);
  const Vec ts = GandK().theta_star();
  CHECK(gandk_quantile(0.0, ts(0), std::exp(ts(1)), ts(2), std::exp(ts(3))) == 1.0);
  // tanh form equals the ratio of exponentials
  const double u = 0.7, g = 1.3;
  const double ratio = (1 - std::exp(-g * u)) / (1 + std::exp(-g * u));
  CHECK(gandk_quantile(u, 0, 1, g, 0) == doctest::Approx((1 + 0.8 * ratio) * u).epsilon(1e-14));

  Rng rng = make_rng(1, 0);
  const Mat x = gandk_simulate(ts, 1000000, rng);
  CHECK(std::abs(median(std::vector<double>(x.data(), x.data() + x.size())) - 1.0) < 0.01);
}

TEST_CASE("g-and-k contamination") {
  GandK g;
  const Vec ts = g.theta_star();
  const Dataset clean = observed_dataset(g, ts, 50, {}, 4);
  ContaminationSpec none{Contamination::huber_shift, 0.0, -50.0};
  const Dataset same = observed_dataset(g, ts, 50, none, 4);
  CHECK(same.x == clean.x);
  CHECK(same.contaminated_count() == 0);

  ContaminationSpec all{Contamination::huber_shift, 1.0, -50.0};
  const Dataset shifted = observed_dataset(g, ts, 50, all, 4);
  CHECK(shifted.contaminated_count() == 50);
  CHECK((shifted.x.array() - clean.x.array() + 50.0).abs().maxCoeff() < 1e-12);

  ContaminationSpec tenth{Contamination::huber_shift, 0.1, -50.0};
  const Dataset d = observed_dataset(g, ts, 100, tenth, 9);
  CHECK(d.contaminated_count() == 10);
  const Dataset base = observed_dataset(g, ts, 100, {}, 9);
  for (Index i = 0; i < 100; ++i) {
    if (d.flags[static_cast<std::size_t>(i)])
      CHECK(d.x(i, 0) == doctest::Approx(base.x(i, 0) - 50.0));
    else
      CHECK(d.x(i, 0) == base.x(i, 0));
  }

  Mat s = base.x;
  Rng rng = make_rng(2, 0);
  const auto flags = gandk_contaminate(s, 0.1, -50.0, rng);
  CHECK(std::count(flags.begin(), flags.end(), 1) == 10);
  Mat s0 = base.x;
  gandk_contaminate(s0, 0.0, -50.0, rng);
  CHECK(s0 == base.x);
}

TEST_CASE("SIR conservation, ranges and summaries on prior draws") {
  Sir sir;
  const auto prior = sir.prior();
  Rng rng = make_rng(3, 0);
  const Mat thetas = prior.sample(1000, rng);
  for (Index r = 0; r < thetas.rows(); ++r) {
    Rng s = make_rng(3, 1, static_cast<std::uint64_t>(r));
    const auto tr = sir_trajectory(thetas.row(r).transpose(), sir.config(), s);
    bool ok = true;
    for (std::size_t t = 0; t < tr.S.size(); ++t)
      ok = ok && tr.S[t] + tr.I[t] + tr.R[t] == 1000 && tr.S[t] >= 0 && tr.I[t] >= 0 && tr.R[t] >= 0;
    CHECK(ok);
    const Vec x = sir_summaries(tr.y, 1000);
    CHECK(x(1) >= 0.0);
    CHECK(x(1) <= 1.0);
    CHECK(x(2) >= 0.0);
    CHECK(x(2) <= 1.0);
    CHECK(x(2) <= x(0));
  }
}

TEST_CASE("SIR edge cases") {
  SirConstants c;
  Rng rng = make_rng(4, 0);
  const Vec no_spread{{-60.0, std::log(0.15), 0.0, std::log(20.0)}};
  const auto tr = sir_trajectory(no_spread, c, rng);
  CHECK(std::all_of(tr.y.begin(), tr.y.end(), [](long v) { return v == 0; }));
  CHECK(tr.S.back() == tr.S.front());

  CHECK_THROWS_AS(sir_trajectory(Vec{{0.0, 0.0, 0.0, std::log(2000.0)}}, c, rng), NumericError);

  // full reporting: reported totals match new infections in expectation
  const Vec full{{std::log(0.6), std::log(0.15), 40.0, std::log(20.0)}};
  double diff = 0, diff2 = 0;
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) {
    const auto t = sir_trajectory(full, c, rng);
    double y = 0;
    for (long v : t.y) y += static_cast<double>(v);
    const double d = y - static_cast<double>(t.S.front() - t.S.back());
    diff += d;
    diff2 += d * d;
  }
  const double m = diff / reps, se = std::sqrt((diff2 / reps - m * m) / reps);
  CHECK(std::abs(m) < 4 * se);
}

TEST_CASE("SIR summaries") {
  std::vector<long> y(150, 0);
  CHECK(sir_summaries(y, 1000) == Vec::Zero(3));
  y[41] = 1000;  // t0 = 42 in 1-based time
  const Vec x = sir_summaries(y, 1000);
  CHECK(x(0) == 1.0);
  CHECK(x(1) == doctest::Approx(41.0 / 149.0).epsilon(1e-15));
  CHECK(x(2) == 1.0);
  std::vector<long> tie(150, 0);
  tie[10] = 5;
  tie[20] = 5;
  CHECK(sir_summaries(tie, 1000)(1) == doctest::Approx(10.0 / 149.0));
}

TEST_CASE("SIR attack rate golden value") {
  // frozen from seed 0 of this implementation: 0.579373
  Sir sir;
  const Vec ts = sir.theta_star();
  for (std::uint64_t seed : {1u, 2u}) {
    double m = 0;
    for (int i = 0; i < 10000; ++i) {
      Rng r = make_rng(seed, 1, static_cast<std::uint64_t>(i));
      m += sir.simulate(ts, r)(0);
    }
    CHECK(std::abs(m / 10000 - 0.579373) < 5e-4);
  }
}

TEST_CASE("SIR undercounting") {
  Rng rng = make_rng(5, 0);
  const auto tr = sir_trajectory(Sir().theta_star(), SirConstants{}, rng);
  CHECK(sir_undercount(tr.y, 1.0, rng) == tr.y);
  const auto thin = sir_undercount(tr.y, 0.5, rng);
  for (std::size_t t = 0; t < thin.size(); ++t) CHECK(thin[t] <= tr.y[t]);

  const std::vector<long> y{0, 3, 17, 40};
  std::vector<double> s(4, 0.0), s2(4, 0.0);
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) {
    const auto v = sir_undercount(y, 0.3, rng);
    for (std::size_t t = 0; t < 4; ++t) {
      s[t] += static_cast<double>(v[t]);
      s2[t] += static_cast<double>(v[t] * v[t]);
    }
  }
  for (std::size_t t = 1; t < 4; ++t) {
    const double m = s[t] / reps, se = std::sqrt((s2[t] / reps - m * m) / reps);
    CHECK(std::abs(m - 0.3 * static_cast<double>(y[t])) < 4 * se);
  }
  CHECK(s[0] == 0.0);

  ContaminationSpec spec{Contamination::undercount, 0.05};
  spec.retention = 0.5;
  Sir sir;
  const auto d = observed_dataset(sir, sir.theta_star(), 100, spec, 6);
  const auto clean = observed_dataset(sir, sir.theta_star(), 100, {}, 6);
  CHECK(d.contaminated_count() == 5);
  for (Index i = 0; i < 100; ++i) {
    if (d.flags[static_cast<std::size_t>(i)])
      CHECK(d.x(i, 0) <= clean.x(i, 0));
    else
      CHECK(d.x.row(i) == clean.x.row(i));
  }
}

TEST_CASE("Cauchy contamination") {
  Mat s = Mat::Ones(200, 3);
  Rng rng = make_rng(7, 0);
  Mat s0 = s;
  sir_cauchy_contaminate(s0, 0.0, 1.0, rng);
  CHECK(s0 == s);
  const auto flags = sir_cauchy_contaminate(s, 0.1, 1.0, rng);
  CHECK(std::count(flags.begin(), flags.end(), 1) == 20);
  for (Index i = 0; i < 200; ++i)
    if (!flags[static_cast<std::size_t>(i)]) CHECK(s.row(i) == Mat::Ones(1, 3));

  Mat big = Mat::Zero(100000, 1);
  sir_cauchy_contaminate(big, 1.0, 1.0, rng);
  const double se = std::numbers::pi / (2 * std::sqrt(100000.0));
  CHECK(std::abs(median(std::vector<double>(big.data(), big.data() + big.size()))) < 4 * se);
}

TEST_CASE("Turin constants and noise-only moments") {
  TurinConstants c;
  CHECK(c.delta_f() == 5e6);
  Turin turin;
  Rng rng = make_rng(8, 0);
  const Vec x = turin.simulate(turin.theta_star(), rng);
  CHECK(x.size() == 3);
  CHECK(x.allFinite());

  // Parseval: noise-only E|y_k|^2 = sigma^2 / K
  const Vec th{{-19.0, -19.0, 22.0, std::log(2.0)}};
  const int reps = 300;
  Vec acc = Vec::Zero(c.points), acc2 = Vec::Zero(c.points);
  for (int r = 0; r < reps; ++r) {
    const auto y = turin_idft(turin_response(th, c, true, rng));
    for (int k = 0; k < c.points; ++k) {
      const double p = std::norm(y[static_cast<std::size_t>(k)]);
      acc(k) += p;
      acc2(k) += p * p;
    }
  }
  const double target = 2.0 / c.points;
  int outside = 0;
  for (int k = 0; k < c.points; ++k) {
    const double m = acc(k) / reps, se = std::sqrt((acc2(k) / reps - m * m) / reps);
    if (std::abs(m - target) > 4 * se) ++outside;
  }
  CHECK(outside <= 2);  // 801 bins at 4 SE
  const double pooled = acc.sum() / (reps * c.points);
  CHECK(std::abs(pooled - target) < 4 * target / std::sqrt(reps * c.points));
}

TEST_CASE("Turin degenerate channels match the noise-only trace") {
  Turin turin;
  Vec th = turin.theta_star();
  th(2) = -60.0;  // no arrivals
  Rng a = make_rng(9, 0), b = make_rng(9, 0);
  CHECK(turin.simulate(th, a) == turin.noise_only(th, b));

  Vec weak = turin.theta_star();
  weak(0) = -300.0;  // G0 -> 0
  Rng c1 = make_rng(10, 0), c2 = make_rng(10, 0);
  const Vec xs = turin.simulate(weak, c1), xn = turin.noise_only(weak, c2);
  CHECK((xs - xn).cwiseAbs().maxCoeff() < 1e-12);

  ContaminationSpec spec{Contamination::noise_only, 0.1};
  const auto d = observed_dataset(turin, turin.theta_star(), 20, spec, 3);
  CHECK(d.contaminated_count() == 2);
}

TEST_CASE("simulators are pure functions of (theta, stream)") {
  for (const char* name : {"gandk", "sir", "turin"}) {
    auto s = make_simulator(name);
    Rng a = make_rng(11, 2), b = make_rng(11, 2);
    CHECK(s->simulate(s->theta_star(), a) == s->simulate(s->theta_star(), b));
  }
  CHECK_THROWS_AS(make_simulator("lotka"), ConfigError);
  CHECK_THROWS(GandK().simulate(Vec::Zero(3), *std::make_unique<Rng>()));
}

TEST_CASE("banks: parallel equals serial, counter, round trip") {
  GandK g;
  reset_simulator_calls();
  const Bank p = simulate_bank(g, 3000, 12);
  CHECK(simulator_calls() == 3000);
  const Bank s = simulate_bank_serial(g, 3000, 12);
  CHECK(p.theta == s.theta);
  CHECK(p.x == s.x);

  const auto dir = scratch("bank");
  p.save(dir);
  const Bank q = Bank::load(dir);
  CHECK(q.theta == p.theta);
  CHECK(q.x == p.x);
  CHECK(q.simulator == "gandk");
  std::filesystem::remove(dir / "bank.json");
  CHECK_THROWS_AS(Bank::load(dir), ManifestError);
  std::filesystem::remove_all(dir);

  Sir sir;
  const Bank ps = simulate_bank(sir, 200, 1), ss = simulate_bank_serial(sir, 200, 1);
  CHECK(ps.x == ss.x);
}

TEST_CASE("datasets round trip with flags") {
  Sir sir;
  ContaminationSpec spec{Contamination::cauchy, 0.1};
  spec.cauchy_scale = 0.5;
  const auto d = observed_dataset(sir, sir.theta_star(), 40, spec, 13);
  CHECK(d.contaminated_count() == 4);
  const auto dir = scratch("data");
  d.save(dir, "observed");
  const auto e = Dataset::load(dir, "observed");
  CHECK(e.x == d.x);
  CHECK(e.flags == d.flags);
  CHECK(e.theta == d.theta);
  CHECK(e.contamination.kind == Contamination::cauchy);
  CHECK(e.contamination.cauchy_scale == 0.5);
  std::filesystem::remove_all(dir);

  CHECK_THROWS_AS(parse_contamination("bogus"), ConfigError);
  ContaminationSpec bad{Contamination::undercount, 0.1};
  bad.retention = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
