#include "nsm/simulators/simulators.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "nsm/core/error.hpp"
#include "nsm/core/io.hpp"
#include "nsm/core/parallel.hpp"

namespace nsm::sim {

namespace {

std::atomic<long> g_calls{0};

double logit(double p) { return std::log(p / (1.0 - p)); }
double inv_logit(double z) { return 1.0 / (1.0 + std::exp(-z)); }

long binomial(long trials, double p, Rng& rng) {
  if (trials <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  return std::binomial_distribution<long>(trials, p)(rng);
}

long poisson(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<long>(mean)(rng);
}

posterior::GaussianPrior diag_prior(Vec mean, Vec var) { return {std::move(mean), var.asDiagonal()}; }

}  // namespace

long simulator_calls() { return g_calls.load(); }
void reset_simulator_calls() { g_calls = 0; }

Vec Simulator::simulate(const Vec& theta, Rng& rng) const {
  check_theta(theta);
  g_calls.fetch_add(1, std::memory_order_relaxed);
  return simulate_impl(theta, rng);
}

void Simulator::check_theta(const Vec& theta) const {
  if (theta.size() != theta_dim())
    throw std::invalid_argument(name() + ": expected " + std::to_string(theta_dim()) + " parameters");
  if (!theta.allFinite()) throw NumericError(name() + ": non-finite parameter");
}

// ---- g-and-k

double gandk_quantile(double u, double a, double b, double g, double k) {
  // (1 - e^{-gu}) / (1 + e^{-gu}) = tanh(gu / 2)
  return a + b * (1.0 + 0.8 * std::tanh(0.5 * g * u)) * std::pow(1.0 + u * u, k) * u;
}

posterior::GaussianPrior GandK::prior() const {
  return diag_prior(Vec{{0.0, 0.7, 0.0, -1.5}}, Vec{{5.0, 0.5, 4.0, 0.25}});
}

Vec GandK::theta_star() const { return Vec{{1.0, 0.5, 1.0, -1.0}}; }

Vec GandK::simulate_impl(const Vec& theta, Rng& rng) const {
  const double u = std::normal_distribution<double>()(rng);
  return Vec::Constant(1, gandk_quantile(u, theta(0), std::exp(theta(1)), theta(2), std::exp(theta(3))));
}

Mat gandk_simulate(const Vec& theta, Index count, Rng& rng) {
  std::normal_distribution<double> n01;
  const double b = std::exp(theta(1)), k = std::exp(theta(3));
  Mat out(count, 1);
  for (Index i = 0; i < count; ++i) out(i, 0) = gandk_quantile(n01(rng), theta(0), b, theta(2), k);
  return out;
}

// ---- SIR

SirTrajectory sir_trajectory(const Vec& theta, const SirConstants& c, Rng& rng) {
  if (theta.size() != 4 || !theta.allFinite()) throw std::invalid_argument("sir: expected four finite parameters");
  const double beta = std::exp(theta(0)), gamma = std::exp(theta(1)), rho = inv_logit(theta(2));
  const double i0 = std::round(std::exp(theta(3)));
  if (i0 > static_cast<double>(c.population))
    throw NumericError("sir: initial infected " + std::to_string(i0) + " exceeds the population");
  const long N = c.population;
  SirTrajectory tr;
  const auto T = static_cast<std::size_t>(c.horizon);
  tr.S.resize(T + 1);
  tr.I.resize(T + 1);
  tr.R.resize(T + 1);
  tr.y.resize(T);
  tr.I[0] = static_cast<long>(i0);
  tr.S[0] = N - tr.I[0];
  tr.R[0] = 0;
  const double p_rec = -std::expm1(-gamma * c.dt);
  for (std::size_t t = 0; t < T; ++t) {
    const double p_inf = -std::expm1(-beta * static_cast<double>(tr.I[t]) / static_cast<double>(N) * c.dt);
    const long dI = binomial(tr.S[t], p_inf, rng);
    const long dR = binomial(tr.I[t], p_rec, rng);
    tr.S[t + 1] = tr.S[t] - dI;
    tr.I[t + 1] = tr.I[t] + dI - dR;
    tr.R[t + 1] = tr.R[t] + dR;
    tr.y[t] = poisson(rho * static_cast<double>(dI), rng);
  }
  return tr;
}

Vec sir_summaries(const std::vector<long>& y, long population) {
  if (y.empty()) throw std::invalid_argument("sir summaries: empty trajectory");
  const double N = static_cast<double>(population);
  const auto peak = std::max_element(y.begin(), y.end());  // first maximum
  const double T1 = y.size() > 1 ? static_cast<double>(y.size() - 1) : 1.0;
  Vec x(3);
  x(0) = static_cast<double>(std::accumulate(y.begin(), y.end(), 0L)) / N;
  x(1) = static_cast<double>(peak - y.begin()) / T1;
  x(2) = static_cast<double>(*peak) / N;
  return x;
}

std::vector<long> sir_undercount(const std::vector<long>& y, double r, Rng& rng) {
  if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("undercount: retention must lie in (0, 1]");
  std::vector<long> out(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) out[t] = binomial(y[t], r, rng);
  return out;
}

posterior::GaussianPrior Sir::prior() const {
  return diag_prior(Vec{{std::log(0.5), std::log(0.2), 0.0, std::log(20.0)}}, Vec{{0.25, 0.25, 1.0, 0.49}});
}

Vec Sir::theta_star() const { return Vec{{std::log(0.6), std::log(0.15), logit(0.6), std::log(20.0)}}; }

nlohmann::json Sir::constants() const {
  return {{"population", c_.population}, {"horizon_steps", c_.horizon}, {"dt_days", c_.dt}};
}

Vec Sir::simulate_impl(const Vec& theta, Rng& rng) const {
  return sir_summaries(sir_trajectory(theta, c_, rng).y, c_.population);
}

// ---- Turin

double TurinConstants::window() const {
  constexpr double z999 = 3.090232306167813;  // standard normal 0.999 quantile
  return 10.0 * std::exp(-19.0 + z999);
}

std::vector<std::complex<double>> turin_response(const Vec& theta, const TurinConstants& c, bool noise_only,
                                                 Rng& rng) {
  const auto K = static_cast<std::size_t>(c.points);
  const double G0 = std::exp(theta(0)), T = std::exp(theta(1)), lambda = std::exp(theta(2)),
               noise = std::exp(theta(3));
  std::vector<std::complex<double>> Y(K, {0.0, 0.0});
  std::normal_distribution<double> n01;
  // noise first, so an empty point process reproduces the noise-only trace exactly
  const double sz = std::sqrt(0.5 * noise);
  for (std::size_t k = 0; k < K; ++k) {
    const double re = n01(rng), im = n01(rng);
    Y[k] += std::complex<double>(sz * re, sz * im);
  }
  if (!noise_only) {
    const double W = c.window();
    const long L = poisson(lambda * W, rng);
    const double df = c.delta_f();
    for (long l = 0; l < L; ++l) {
      const double tau = uniform01(rng) * W;
      const double sd = std::sqrt(0.5 * G0 * std::exp(-tau / T) / lambda);
      const double re = n01(rng), im = n01(rng);
      const std::complex<double> alpha(sd * re, sd * im);
      const std::complex<double> z = std::polar(1.0, -2.0 * std::numbers::pi * df * tau);
      std::complex<double> zk(1.0, 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        Y[k] += alpha * zk;
        zk *= z;
      }
    }
  }
  return Y;
}

std::vector<std::complex<double>> turin_idft(const std::vector<std::complex<double>>& Y) {
  const std::size_t K = Y.size();
  std::vector<std::complex<double>> tw(K);
  for (std::size_t m = 0; m < K; ++m)
    tw[m] = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(K));
  std::vector<std::complex<double>> y(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::complex<double> s(0.0, 0.0);
    std::size_t idx = 0;
    for (std::size_t j = 0; j < K; ++j) {
      s += Y[j] * tw[idx];
      idx += k;
      if (idx >= K) idx %= K;
    }
    y[k] = s / static_cast<double>(K);
  }
  return y;
}

Vec temporal_moments(const std::vector<std::complex<double>>& y, const TurinConstants& c) {
  const double dt = 1.0 / (static_cast<double>(c.points) * c.delta_f());
  Vec m = Vec::Zero(c.moments + 1);
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double p = std::norm(y[k]) * dt, t = static_cast<double>(k) * dt;
    double tj = 1.0;
    for (int j = 0; j <= c.moments; ++j) {
      m(j) += p * tj;
      tj *= t;
    }
  }
  return m.array().log().matrix();
}

std::vector<std::string> Turin::x_names() const {
  std::vector<std::string> out;
  for (int j = 0; j <= c_.moments; ++j) out.push_back("log_m" + std::to_string(j));
  return out;
}

posterior::GaussianPrior Turin::prior() const { return {Vec{{-19.0, -19.0, 22.0, -22.0}}, Mat::Identity(4, 4)}; }

Vec Turin::theta_star() const { return prior().mean; }

nlohmann::json Turin::constants() const {
  return {{"bandwidth_hz", c_.bandwidth},
          {"frequency_points", c_.points},
          {"moments", c_.moments},
          {"window_s", c_.window()}};
}

Vec Turin::simulate_impl(const Vec& theta, Rng& rng) const {
  return temporal_moments(turin_idft(turin_response(theta, c_, false, rng)), c_);
}

Vec Turin::noise_only(const Vec& theta, Rng& rng) const {
  check_theta(theta);
  g_calls.fetch_add(1, std::memory_order_relaxed);
  return temporal_moments(turin_idft(turin_response(theta, c_, true, rng)), c_);
}

std::unique_ptr<Simulator> make_simulator(const std::string& name) {
  if (name == "gandk") return std::make_unique<GandK>();
  if (name == "sir") return std::make_unique<Sir>();
  if (name == "turin") return std::make_unique<Turin>();
  throw ConfigError("unknown simulator '" + name + "' (expected gandk, sir or turin)");
}

// ---- contamination

Contamination parse_contamination(const std::string& s) {
  if (s == "none") return Contamination::none;
  if (s == "huber-shift") return Contamination::huber_shift;
  if (s == "undercount") return Contamination::undercount;
  if (s == "cauchy") return Contamination::cauchy;
  if (s == "noise-only") return Contamination::noise_only;
  throw ConfigError("unknown contamination kind '" + s + "'");
}

std::string to_string(Contamination c) {
  switch (c) {
    case Contamination::none: return "none";
    case Contamination::huber_shift: return "huber-shift";
    case Contamination::undercount: return "undercount";
    case Contamination::cauchy: return "cauchy";
    case Contamination::noise_only: return "noise-only";
  }
  return "none";
}

void ContaminationSpec::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("contamination: epsilon must lie in [0, 1]");
  if (kind == Contamination::undercount && !(retention > 0.0 && retention < 1.0))
    throw ConfigError("contamination: retention must lie in (0, 1)");
  if (kind == Contamination::cauchy && !(cauchy_scale > 0.0)) throw ConfigError("contamination: scale must be positive");
  if (!std::isfinite(shift)) throw ConfigError("contamination: shift must be finite");
}

nlohmann::json ContaminationSpec::to_json() const {
  return {{"kind", to_string(kind)}, {"epsilon", epsilon}, {"shift", shift}, {"retention", retention},
          {"cauchy_scale", cauchy_scale}};
}

ContaminationSpec ContaminationSpec::from_json(const nlohmann::json& j) {
  ContaminationSpec s;
  s.kind = parse_contamination(j.value("kind", std::string("none")));
  s.epsilon = j.value("epsilon", 0.0);
  s.shift = j.value("shift", -50.0);
  s.retention = j.value("retention", 0.5);
  s.cauchy_scale = j.value("cauchy_scale", 1.0);
  return s;
}

std::vector<Index> choose_contaminated(Index n, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("contamination: epsilon must lie in [0, 1]");
  const auto k = static_cast<Index>(std::llround(epsilon * static_cast<double>(n)));
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  // partial Fisher-Yates
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(uniform01(rng) * static_cast<double>(n - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(std::min(j, n - 1))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<int> gandk_contaminate(Mat& samples, double epsilon, double shift, Rng& rng) {
  std::vector<int> flags(static_cast<std::size_t>(samples.rows()), 0);
  for (Index i : choose_contaminated(samples.rows(), epsilon, rng)) {
    samples.row(i).array() += shift;
    flags[static_cast<std::size_t>(i)] = 1;
  }
  return flags;
}

std::vector<int> sir_cauchy_contaminate(Mat& summaries, double epsilon, double scale, Rng& rng) {
  std::vector<int> flags(static_cast<std::size_t>(summaries.rows()), 0);
  std::cauchy_distribution<double> cauchy(0.0, scale);
  for (Index i : choose_contaminated(summaries.rows(), epsilon, rng)) {
    for (Index j = 0; j < summaries.cols(); ++j) summaries(i, j) += cauchy(rng);
    flags[static_cast<std::size_t>(i)] = 1;
  }
  return flags;
}

Index Dataset::contaminated_count() const { return std::accumulate(flags.begin(), flags.end(), Index{0}); }

Dataset observed_dataset(const Simulator& sim, const Vec& theta, Index n, const ContaminationSpec& spec,
                         std::uint64_t seed) {
  spec.validate();
  Dataset d;
  d.simulator = sim.name();
  d.theta = theta;
  d.seed = seed;
  d.contamination = spec;
  d.x.resize(n, sim.x_dim());
  d.flags.assign(static_cast<std::size_t>(n), 0);
  Rng pick = make_rng(seed, label_id("contaminate"));
  if (spec.kind != Contamination::none)
    for (Index i : choose_contaminated(n, spec.epsilon, pick)) d.flags[static_cast<std::size_t>(i)] = 1;

  const auto* sir = dynamic_cast<const Sir*>(&sim);
  const auto* turin = dynamic_cast<const Turin*>(&sim);
  const std::uint64_t obs = label_id("observed");
  for (Index i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, obs, static_cast<std::uint64_t>(i));
    const bool bad = d.flags[static_cast<std::size_t>(i)] != 0;
    Vec x;
    if (!bad) {
      x = sim.simulate(theta, rng);
    } else {
      switch (spec.kind) {
        case Contamination::huber_shift:
          x = sim.simulate(theta, rng).array() + spec.shift;
          break;
        case Contamination::undercount: {
          if (!sir) throw ConfigError("undercount contamination needs the sir simulator");
          g_calls.fetch_add(1, std::memory_order_relaxed);
          const auto tr = sir_trajectory(theta, sir->config(), rng);
          Rng thin = make_rng(seed, label_id("thin"), static_cast<std::uint64_t>(i));
          x = sir_summaries(sir_undercount(tr.y, spec.retention, thin), sir->config().population);
          break;
        }
        case Contamination::cauchy: {
          x = sim.simulate(theta, rng);
          Rng noise = make_rng(seed, label_id("cauchy"), static_cast<std::uint64_t>(i));
          std::cauchy_distribution<double> cauchy(0.0, spec.cauchy_scale);
          for (Index j = 0; j < x.size(); ++j) x(j) += cauchy(noise);
          break;
        }
        case Contamination::noise_only:
          if (!turin) throw ConfigError("noise-only contamination needs the turin simulator");
          x = turin->noise_only(theta, rng);
          break;
        case Contamination::none:
          break;
      }
    }
    d.x.row(i) = x.transpose();
  }
  return d;
}

void Dataset::save(const std::filesystem::path& dir, const std::string& stem) const {
  std::filesystem::create_directories(dir);
  auto sim = make_simulator(simulator);
  std::vector<std::string> header = sim->x_names();
  header.push_back("contaminated");
  Mat v(x.rows(), x.cols() + 1);
  v.leftCols(x.cols()) = x;
  for (Index i = 0; i < x.rows(); ++i) v(i, x.cols()) = flags[static_cast<std::size_t>(i)];
  io::write_csv(dir / (stem + ".csv"), header, v);
  io::write_json(dir / (stem + ".json"), {{"simulator", simulator},
                                          {"theta", io::to_json(theta)},
                                          {"seed", seed},
                                          {"n", x.rows()},
                                          {"contaminated", contaminated_count()},
                                          {"contamination", contamination.to_json()},
                                          {"data", stem + ".csv"}});
}

Dataset Dataset::load(const std::filesystem::path& dir, const std::string& stem) {
  const auto j = io::read_json(dir / (stem + ".json"));
  Dataset d;
  try {
    d.simulator = j.at("simulator").get<std::string>();
    d.theta = io::vec_from_json(j.at("theta"));
    d.seed = j.at("seed").get<std::uint64_t>();
    d.contamination = ContaminationSpec::from_json(j.at("contamination"));
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("bad dataset manifest: " + std::string(e.what()));
  }
  const auto t = io::read_csv(dir / (stem + ".csv"));
  if (t.header.empty() || t.header.back() != "contaminated") throw ManifestError("dataset csv lacks the flag column");
  d.x = t.values.leftCols(t.values.cols() - 1);
  d.flags.resize(static_cast<std::size_t>(t.values.rows()));
  for (Index i = 0; i < t.values.rows(); ++i) d.flags[static_cast<std::size_t>(i)] = static_cast<int>(t.values(i, t.values.cols() - 1));
  return d;
}

// ---- banks

namespace {

void bank_task(const Simulator& sim, const posterior::GaussianPrior& prior, std::uint64_t seed, Index i, Bank& b) {
  Rng rng = make_rng(seed, label_id("bank"), static_cast<std::uint64_t>(i));
  const Vec theta = prior.sample(1, rng).row(0).transpose();
  b.theta.row(i) = theta.transpose();
  b.x.row(i) = sim.simulate(theta, rng).transpose();
}

Bank empty_bank(const Simulator& sim, Index m, std::uint64_t seed) {
  Bank b;
  b.simulator = sim.name();
  b.seed = seed;
  b.theta.resize(m, sim.theta_dim());
  b.x.resize(m, sim.x_dim());
  return b;
}

}  // namespace

Bank simulate_bank(const Simulator& sim, Index m, std::uint64_t seed) {
  Bank b = empty_bank(sim, m, seed);
  const auto prior = sim.prior();
  std::atomic<Index> failed{-1};
#pragma omp parallel for schedule(dynamic, 64) num_threads(worker_count())
  for (Index i = 0; i < m; ++i) {
    try {
      bank_task(sim, prior, seed, i, b);
    } catch (...) {
      Index expected = -1;
      failed.compare_exchange_strong(expected, i);
    }
  }
  if (failed >= 0) bank_task(sim, prior, seed, failed, b);  // rethrows on this thread
  return b;
}

Bank simulate_bank_serial(const Simulator& sim, Index m, std::uint64_t seed) {
  Bank b = empty_bank(sim, m, seed);
  const auto prior = sim.prior();
  for (Index i = 0; i < m; ++i) bank_task(sim, prior, seed, i, b);
  return b;
}

void Bank::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto sim = make_simulator(simulator);
  std::vector<std::string> header = sim->theta_names();
  for (const auto& s : sim->x_names()) header.push_back(s);
  Mat v(theta.rows(), theta.cols() + x.cols());
  v << theta, x;
  io::write_csv(dir / "bank.csv", header, v);
  io::write_json(dir / "bank.json", {{"simulator", simulator},
                                     {"seed", seed},
                                     {"count", theta.rows()},
                                     {"theta_dim", theta.cols()},
                                     {"x_dim", x.cols()},
                                     {"constants", sim->constants()},
                                     {"contamination", ContaminationSpec{}.to_json()},
                                     {"data", "bank.csv"}});
}

Bank Bank::load(const std::filesystem::path& dir) {
  const auto j = io::read_json(dir / "bank.json");
  Bank b;
  Index dt = 0, count = 0;
  try {
    b.simulator = j.at("simulator").get<std::string>();
    b.seed = j.at("seed").get<std::uint64_t>();
    dt = j.at("theta_dim").get<Index>();
    count = j.at("count").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("bad bank manifest: " + std::string(e.what()));
  }
  const auto t = io::read_csv(dir / "bank.csv");
  if (t.values.rows() != count || t.values.cols() <= dt) throw ManifestError("bank csv does not match its manifest");
  b.theta = t.values.leftCols(dt);
  b.x = t.values.rightCols(t.values.cols() - dt);
  return b;
}

}  // namespace nsm::sim
