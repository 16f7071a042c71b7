#include "nsm/calibrate/calibrate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "nsm/calibrate/chi2.hpp"
#include "nsm/core/io.hpp"
#include "nsm/core/parallel.hpp"

namespace nsm::calibrate {

namespace {

constexpr std::uint64_t kBootstrapStream = 0x62'6f'6f'74;  // "boot"

double coverage_target(const CalibConfig& cfg) { return 1.0 - cfg.alpha; }

// fraction of bootstraps whose region holds theta_hat; NaN entries are skipped
double mean_valid(const std::vector<double>& hits) {
  double s = 0;
  int k = 0;
  for (double h : hits)
    if (!std::isnan(h)) {
      s += h;
      ++k;
    }
  return k == 0 ? std::numeric_limits<double>::quiet_NaN() : s / k;
}

}  // namespace

void CalibConfig::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("calibration: alpha must lie in (0, 1)");
  if (bootstraps < 1 || steps < 1 || draws < 1) throw ConfigError("calibration: B, T and M must be at least 1");
  if (!(beta0 > 0)) throw ConfigError("calibration: beta0 must be positive");
  if (!(ess_floor > 0 && ess_floor <= 1) || !(ess_abort >= 0 && ess_abort < ess_floor))
    throw ConfigError("calibration: ESS thresholds must satisfy 0 <= abort < floor <= 1");
  if (warmup < 0) throw ConfigError("calibration: warmup must be non-negative");
}

bool credible_region_contains(const posterior::GaussianPosterior& post, const Vec& theta, double alpha) {
  const auto llt = posterior::spd_factor(post.cov, "credible region covariance");
  const double d2 = Vec(llt.matrixL().solve(theta - post.mean)).squaredNorm();
  return d2 <= chi2_quantile(1.0 - alpha, static_cast<double>(post.dim()));
}

Vec bootstrap_counts(Index n, std::uint64_t seed, int t, int b) {
  Rng rng = make_rng(seed, kBootstrapStream, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(b));
  Vec counts = Vec::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<Index>(uniform01(rng) * static_cast<double>(n));
    counts(std::min(k, n - 1)) += 1.0;
  }
  return counts;
}

double beta_update(const CalibConfig& cfg, int t, double beta, double coverage) {
  const double lb = std::log(beta) + cfg.kappa(t) * (coverage - coverage_target(cfg));
  return std::max(std::exp(lb), cfg.beta_floor());
}

double conjugate_coverage(const loss::ConjCache& cache, const posterior::GaussianPrior& prior, const CalibConfig& cfg,
                     const Vec& theta_hat, double beta, int t) {
  std::vector<double> hits(static_cast<std::size_t>(cfg.bootstraps));
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (int b = 0; b < cfg.bootstraps; ++b) {
    try {
      const Vec counts = bootstrap_counts(cache.size(), cfg.seed, t, b);
      const auto post = posterior::nsm_conj_posterior(prior, cache.coefficients(counts), beta);
      hits[static_cast<std::size_t>(b)] = credible_region_contains(post, theta_hat, cfg.alpha) ? 1.0 : 0.0;
    } catch (const NumericError&) {
      hits[static_cast<std::size_t>(b)] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return mean_valid(hits);
}

CalibResult calibrate_conjugate(const loss::ConjCache& cache, const posterior::GaussianPrior& prior,
                                const CalibConfig& cfg) {
  cfg.validate();
  CalibResult res;
  res.theta_hat = posterior::theta_hat_closed_form(cache.coefficients());
  double beta = cfg.beta0;
  for (int t = 1; t <= cfg.steps; ++t) {
    const double c = conjugate_coverage(cache, prior, cfg, res.theta_hat, beta, t);
    if (std::isnan(c)) throw CalibrationError("calibration: every bootstrap posterior was degenerate", res.trace);
    res.trace.push_back({t, beta, c});
    beta = beta_update(cfg, t, beta, c);
  }
  res.beta = beta;
  res.final_coverage = conjugate_coverage(cache, prior, cfg, res.theta_hat, beta, cfg.steps + 1);
  if (std::isnan(res.final_coverage))
    throw CalibrationError("calibration: every bootstrap posterior was degenerate", res.trace);
  return res;
}

CalibResult calibrate_conjugate(const Mat& data, const surrogate::ExpFamEbm& model, const weights::ImqWeight& w,
                                const posterior::GaussianPrior& prior, const CalibConfig& cfg) {
  return calibrate_conjugate(loss::ConjCache(data, model, w), prior, cfg);
}

Vec importance_weights(const Mat& L, const Vec& counts, double beta, double beta_curr) {
  if (counts.size() != L.cols()) throw std::invalid_argument("importance weights: count vector has the wrong length");
  const Vec logw = -beta * (L * counts) + beta_curr * L.rowwise().sum();
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw NumericError("importance weights: non-finite log weight");
  Vec w = (logw.array() - top).exp().matrix();
  return w / w.sum();
}

double effective_sample_size(const Vec& w) {
  const double s = w.sum();
  return s * s / w.squaredNorm();
}

double weighted_quantile(const Vec& values, const Vec& weights, double p) {
  if (values.size() != weights.size() || values.size() == 0) throw std::invalid_argument("weighted quantile: bad sizes");
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values(a) < values(b); });
  const double target = p * weights.sum();
  double cum = 0.0;
  for (Index k : order) {
    cum += weights(k);
    if (cum >= target) return values(k);
  }
  return values(order.back());
}

IsCache run_chain(const PointLossFn& losses, Index n, const posterior::GaussianPrior& prior, double beta,
                  Index draws, int warmup, Rng& rng) {
  auto logp = [&](const Vec& th) { return prior.log_density(th) - beta * losses(th).sum(); };
  IsCache cache;
  cache.beta = beta;
  cache.draws = sampler::slice_sample(logp, prior.mean, draws, posterior::default_slice_config(prior, warmup), rng);
  cache.L.resize(draws, n);
  for (Index i = 0; i < draws; ++i) {
    const Vec l = losses(cache.draws.row(i).transpose());
    if (l.size() != n) throw std::invalid_argument("calibration: loss vector has the wrong length");
    cache.L.row(i) = l.transpose();
  }
  return cache;
}

namespace {

struct IsStep {
  double coverage;
  double ess;  // mean fraction
};

IsStep is_coverage(const IsCache& cache, const CalibConfig& cfg, const Vec& theta_hat, double beta, int t) {
  const Index n = cache.L.cols();
  const double M = static_cast<double>(cache.draws.rows());
  std::vector<double> hits(static_cast<std::size_t>(cfg.bootstraps));
  std::vector<double> ess(static_cast<std::size_t>(cfg.bootstraps));
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
  for (int b = 0; b < cfg.bootstraps; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    const Vec w = importance_weights(cache.L, bootstrap_counts(n, cfg.seed, t, b), beta, cache.beta);
    ess[ub] = effective_sample_size(w) / M;
    const Vec mu = cache.draws.transpose() * w;
    const Mat c = cache.draws.rowwise() - mu.transpose();
    Mat cov = c.transpose() * w.asDiagonal() * c;
    cov = 0.5 * (cov + cov.transpose());
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success || Mat(llt.matrixL()).diagonal().minCoeff() <= 0) {
      hits[ub] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    Vec d2(c.rows());
    for (Index i = 0; i < c.rows(); ++i) d2(i) = Vec(llt.matrixL().solve(c.row(i).transpose())).squaredNorm();
    const double tau = weighted_quantile(d2, w, 1.0 - cfg.alpha);
    const double dhat = Vec(llt.matrixL().solve(theta_hat - mu)).squaredNorm();
    hits[ub] = dhat <= tau ? 1.0 : 0.0;
  }
  return {mean_valid(hits), std::accumulate(ess.begin(), ess.end(), 0.0) / static_cast<double>(ess.size())};
}

}  // namespace

CalibResult calibrate_mcmc_is(const PointLossFn& losses, Index n, const posterior::GaussianPrior& prior,
                              const CalibConfig& cfg) {
  cfg.validate();
  CalibResult res;
  res.theta_hat = posterior::theta_hat_optimize([&](const Vec& th) { return losses(th).sum(); }, prior.mean);

  int chain_id = 0;
  auto chain = [&](double beta) {
    Rng rng = make_rng(cfg.seed, label_id("calibrate-mcmc"), static_cast<std::uint64_t>(chain_id++));
    return run_chain(losses, n, prior, beta, cfg.draws, cfg.warmup, rng);
  };
  IsCache cache = chain(cfg.beta0);
  double beta = cfg.beta0;

  auto step = [&](int t, bool& refreshed) {
    IsStep s = is_coverage(cache, cfg, res.theta_hat, beta, t);
    if (s.ess < cfg.ess_floor) {
      cache = chain(beta);
      ++res.refreshes;
      refreshed = true;
      s = is_coverage(cache, cfg, res.theta_hat, beta, t);
      if (s.ess < cfg.ess_abort) {
        res.trace.push_back({t, beta, s.coverage, s.ess, true});
        throw CalibrationError("calibration: effective sample size collapsed after refreshing the chain", res.trace);
      }
    }
    if (std::isnan(s.coverage)) throw CalibrationError("calibration: every weighted posterior was degenerate", res.trace);
    return s;
  };

  for (int t = 1; t <= cfg.steps; ++t) {
    bool refreshed = false;
    const IsStep s = step(t, refreshed);
    res.trace.push_back({t, beta, s.coverage, s.ess, refreshed});
    beta = beta_update(cfg, t, beta, s.coverage);
  }
  res.beta = beta;
  bool refreshed = false;
  res.final_coverage = step(cfg.steps + 1, refreshed).coverage;
  return res;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<CalibStep>& trace) {
  Mat v(static_cast<Index>(trace.size()), 4);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto r = static_cast<Index>(i);
    v(r, 0) = trace[i].t;
    v(r, 1) = trace[i].beta;
    v(r, 2) = trace[i].coverage;
    v(r, 3) = trace[i].ess;
  }
  io::write_csv(path, {"t", "beta", "coverage", "ess"}, v);
}

}  // namespace nsm::calibrate
