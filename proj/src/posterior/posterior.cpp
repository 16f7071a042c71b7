#include "nsm/posterior/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nsm/core/error.hpp"

namespace nsm::posterior {

GaussianPosterior nsm_conj_posterior(const GaussianPrior& prior, const loss::ConjCoefficients& coeffs, double beta,
                                     double n) {
  if (!(beta > 0)) throw std::invalid_argument("conjugate posterior: beta must be positive");
  const Index d = prior.dim();
  if (coeffs.A.rows() != d || coeffs.B.size() != d) throw std::invalid_argument("conjugate posterior: dimension mismatch");
  const Mat P0 = prior.precision();
  Mat Q = P0 + 2.0 * beta * n * coeffs.A;
  Q = 0.5 * (Q + Q.transpose());
  const auto llt = spd_factor(Q, "posterior precision");
  GaussianPosterior post;
  post.beta = beta;
  post.mean = llt.solve(P0 * prior.mean - 2.0 * beta * n * coeffs.B);
  post.cov = llt.solve(Mat::Identity(d, d));
  post.cov = 0.5 * (post.cov + post.cov.transpose());
  post.provenance = {{"method", "nsm-conj"}, {"n", n}};
  return post;
}

double default_ridge(const Mat& A) { return 1e-2 * A.trace() / static_cast<double>(A.rows()) + 1e-12; }

Vec theta_hat_closed_form(const loss::ConjCoefficients& coeffs, double lambda) {
  if (lambda < 0) lambda = default_ridge(coeffs.A);
  const Index d = coeffs.A.rows();
  Mat M = coeffs.A + lambda * Mat::Identity(d, d);
  return -spd_factor(0.5 * (M + M.transpose()), "ridge system").solve(coeffs.B);
}

NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& init, const NelderMeadOptions& opt) {
  const Index d = init.size();
  NelderMeadResult res;
  auto eval = [&](const Vec& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  std::vector<Vec> simplex(static_cast<std::size_t>(d + 1), init);
  std::vector<double> fv(static_cast<std::size_t>(d + 1));
  fv[0] = eval(init);
  if (!std::isfinite(fv[0])) throw NumericError("nelder-mead: objective is not finite at the initial point");
  for (Index i = 0; i < d; ++i) {
    const double step = opt.initial_step.size() == d ? opt.initial_step(i) : 0.1 * std::max(1.0, std::abs(init(i)));
    simplex[static_cast<std::size_t>(i + 1)](i) += step;
    fv[static_cast<std::size_t>(i + 1)] = eval(simplex[static_cast<std::size_t>(i + 1)]);
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(d + 1));
  const double dd = static_cast<double>(d);
  // adaptive coefficients (Gao & Han) behave better for d > 2
  const double alpha = 1.0, gamma = 1.0 + 2.0 / dd, rho = 0.75 - 1.0 / (2.0 * dd), sigma = 1.0 - 1.0 / dd;
  const double g = d > 1 ? gamma : 2.0, r = d > 1 ? rho : 0.5, s = d > 1 ? sigma : 0.5;

  while (res.evaluations < opt.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    {
      std::vector<Vec> s2;
      std::vector<double> f2;
      for (auto k : order) {
        s2.push_back(simplex[k]);
        f2.push_back(fv[k]);
      }
      simplex.swap(s2);
      fv.swap(f2);
    }
    double diam = 0.0;
    for (std::size_t k = 1; k < simplex.size(); ++k)
      diam = std::max(diam, (simplex[k] - simplex[0]).lpNorm<Eigen::Infinity>());
    if (diam < opt.tolerance) {
      res.converged = true;
      break;
    }
    Vec centroid = Vec::Zero(d);
    for (Index k = 0; k < d; ++k) centroid += simplex[static_cast<std::size_t>(k)];
    centroid /= dd;
    const auto worst = static_cast<std::size_t>(d);
    const Vec xr = centroid + alpha * (centroid - simplex[worst]);
    const double fr = eval(xr);
    if (fr < fv[0]) {
      const Vec xe = centroid + g * (xr - centroid);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[worst - 1]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Vec xc = outside ? Vec(centroid + r * (xr - centroid)) : Vec(centroid + r * (simplex[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t k = 1; k < simplex.size(); ++k) {
      simplex[k] = simplex[0] + s * (simplex[k] - simplex[0]);
      fv[k] = eval(simplex[k]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.argmin = simplex[best];
  res.value = fv[best];
  return res;
}

Vec theta_hat_optimize(const std::function<double(const Vec&)>& loss, const Vec& init, const NelderMeadOptions& opt) {
  return nelder_mead(loss, init, opt).argmin;
}

sampler::SliceConfig default_slice_config(const GaussianPrior& prior, int warmup) {
  sampler::SliceConfig cfg;
  cfg.widths = prior.sd();
  cfg.warmup = warmup;
  return cfg;
}

Mat nsm_sample(const GaussianPrior& prior, const Mat& data, const surrogate::Surrogate& model,
               const weights::ImqWeight& w, double beta, Index count, const sampler::SliceConfig& cfg, Rng& rng) {
  const double n = static_cast<double>(data.rows());
  auto logp = [&](const Vec& th) {
    const double prior_lp = prior.log_density(th);
    if (data.rows() == 0) return prior_lp;
    return prior_lp - beta * n * loss::nsm_loss(th, data, model, w);
  };
  return sampler::slice_sample(logp, prior.mean, count, cfg, rng);
}

Mat nle_sample(const GaussianPrior& prior, const Mat& data, const surrogate::Surrogate& model, Index count,
               const sampler::SliceConfig& cfg, Rng& rng) {
  auto logp = [&](const Vec& th) {
    double lp = prior.log_density(th);
    if (data.rows() > 0) {
      try {
        lp += model.log_density_sum(data, th);
      } catch (const NumericError&) {
        return -std::numeric_limits<double>::infinity();
      }
    }
    return lp;
  };
  return sampler::slice_sample(logp, prior.mean, count, cfg, rng);
}

}  // namespace nsm::posterior
