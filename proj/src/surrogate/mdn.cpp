#include "nsm/surrogate/mdn.hpp"

#include <cmath>
#include <numbers>

#include "nsm/core/error.hpp"

namespace nsm::surrogate {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

nets::MlpSpec Mdn::spec(Index x_dim, Index theta_dim, const MdnConfig& cfg) {
  nets::MlpSpec s;
  s.input_dim = theta_dim;
  s.cond_dim = 0;
  s.hidden = cfg.hidden;
  s.heads = {{"logits", cfg.components, false},
             {"means", cfg.components * x_dim, false},
             {"variances", cfg.components * x_dim, true}};
  return s;
}

Mdn::Mdn(Index x_dim, Index theta_dim, MdnConfig cfg, Rng& rng) : Surrogate(x_dim, theta_dim), cfg_(std::move(cfg)) {
  if (cfg_.components < 1 || !(cfg_.variance_floor > 0)) throw std::invalid_argument("mdn: bad configuration");
  nets_.emplace_back(spec(x_dim, theta_dim, cfg_), rng);
}

Mdn::Mdn(Index x_dim, Index theta_dim, MdnConfig cfg) : Surrogate(x_dim, theta_dim), cfg_(std::move(cfg)) {
  if (cfg_.components < 1 || !(cfg_.variance_floor > 0)) throw std::invalid_argument("mdn: bad configuration");
  nets_.emplace_back(spec(x_dim, theta_dim, cfg_));
}

Mdn::Mixture Mdn::standardised_mixture(const Vec& theta) const {
  const Index K = cfg_.components, d = x_dim_;
  auto out = nets_[0].forward(theta_std_.transform(theta), Vec());
  Mixture m;
  const double lse = log_sum_exp(out[0]);
  m.weights = (out[0].array() - lse).exp().matrix();
  m.means.resize(K, d);
  m.vars.resize(K, d);
  for (Index k = 0; k < K; ++k)
    for (Index j = 0; j < d; ++j) {
      m.means(k, j) = out[1](k * d + j);
      m.vars(k, j) = out[2](k * d + j) + cfg_.variance_floor;
    }
  return m;
}

Mdn::Mixture Mdn::mixture(const Vec& theta) const {
  Mixture m = standardised_mixture(theta);
  for (Index k = 0; k < m.means.rows(); ++k) {
    m.means.row(k) = (m.means.row(k).array() * x_std_.scale.transpose().array()).matrix() + x_std_.shift.transpose();
    m.vars.row(k) = (m.vars.row(k).array() * x_std_.scale.transpose().array().square()).matrix();
  }
  return m;
}

double Mdn::variance_lower_bound() const { return cfg_.variance_floor * x_std_.scale.array().square().minCoeff(); }

namespace {

// log of each weighted component density at standardised z
Vec component_logs(const Mdn::Mixture& m, const Vec& z) {
  const Index K = m.weights.size(), d = z.size();
  Vec l(K);
  for (Index k = 0; k < K; ++k) {
    const auto diff = z.transpose() - m.means.row(k);
    l(k) = std::log(m.weights(k)) - 0.5 * (diff.array().square() / m.vars.row(k).array()).sum() -
           0.5 * m.vars.row(k).array().log().sum() - 0.5 * static_cast<double>(d) * kLog2Pi;
  }
  return l;
}

}  // namespace

double Mdn::log_density(const Vec& x, const Vec& theta) const {
  const Mixture m = standardised_mixture(theta);
  const double v = log_sum_exp(component_logs(m, x_std_.transform(x))) - x_std_.log_scale_sum();
  if (!std::isfinite(v)) throw NumericError("mdn: non-finite log density");
  return v;
}

double Mdn::log_density_sum(const Mat& X, const Vec& theta) const {
  const Mixture m = standardised_mixture(theta);
  const Mat Z = x_std_.transform_rows(X);
  double s = 0.0;
  for (Index i = 0; i < Z.rows(); ++i) s += log_sum_exp(component_logs(m, Z.row(i).transpose()));
  s -= static_cast<double>(X.rows()) * x_std_.log_scale_sum();
  if (!std::isfinite(s)) throw NumericError("mdn: non-finite log density");
  return s;
}

Vec Mdn::responsibilities(const Vec& x, const Vec& theta) const {
  const Vec l = component_logs(standardised_mixture(theta), x_std_.transform(x));
  return (l.array() - log_sum_exp(l)).exp().matrix();
}

ScoreTrace Mdn::score_trace(const Vec& x, const Vec& theta) const {
  const Mixture m = standardised_mixture(theta);
  const Vec z = x_std_.transform(x);
  const Vec l = component_logs(m, z);
  const Vec rho = (l.array() - log_sum_exp(l)).exp().matrix();
  const Index d = x_dim_;
  Vec mean_s = Vec::Zero(d), mean_s2 = Vec::Zero(d), mean_h = Vec::Zero(d);
  for (Index k = 0; k < rho.size(); ++k) {
    const Vec s = -((z.transpose() - m.means.row(k)).array() / m.vars.row(k).array()).matrix().transpose();
    mean_s += rho(k) * s;
    mean_s2 += rho(k) * s.cwiseAbs2();
    mean_h -= rho(k) * m.vars.row(k).transpose().cwiseInverse();
  }
  const Vec hdiag = mean_h + mean_s2 - mean_s.cwiseAbs2();
  ScoreTrace st;
  st.score = (mean_s.array() / x_std_.scale.array()).matrix();
  st.trace = (hdiag.array() / x_std_.scale.array().square()).sum();
  return st;
}

Mat Mdn::hessian_x(const Vec& x, const Vec& theta) const {
  const Mixture m = standardised_mixture(theta);
  const Vec z = x_std_.transform(x);
  const Vec l = component_logs(m, z);
  const Vec rho = (l.array() - log_sum_exp(l)).exp().matrix();
  const Index d = x_dim_;
  Vec mean_s = Vec::Zero(d);
  Mat H = Mat::Zero(d, d);
  for (Index k = 0; k < rho.size(); ++k) {
    const Vec s = -((z.transpose() - m.means.row(k)).array() / m.vars.row(k).array()).matrix().transpose();
    mean_s += rho(k) * s;
    H += rho(k) * (s * s.transpose());
    H.diagonal() -= rho(k) * m.vars.row(k).transpose().cwiseInverse();
  }
  H -= mean_s * mean_s.transpose();
  const Vec inv = x_std_.scale.cwiseInverse();
  return inv.asDiagonal() * H * inv.asDiagonal();
}

diff::Var Mdn::record_objective(diff::Tape& tape, const Mat& Z, const Mat& Th) const {
  using namespace diff;
  const Index K = cfg_.components, d = x_dim_, B = Z.rows();
  auto heads = nets_[0].record(tape, tape.constant(Th), Var{}, 0);
  Var vars = affine(heads[2], 1.0, cfg_.variance_floor);
  Mat S = Mat::Zero(K * d, K);
  for (Index k = 0; k < K; ++k) S.block(k * d, k, d, 1).setOnes();
  Var Sv = tape.constant(S);
  Var diffs = tape.constant(Z.replicate(1, K)) - heads[1];
  Var quad = matmul(square(diffs) * reciprocal(vars), Sv);
  Var logdet = matmul(log(vars), Sv);
  Var logf = affine(quad + logdet, -0.5, -0.5 * static_cast<double>(d) * kLog2Pi);
  Var ll = logsumexp_rows(heads[0] + logf) - logsumexp_rows(heads[0]);
  return affine(sum(ll), -1.0 / static_cast<double>(B));
}

nlohmann::json Mdn::hyperparameters() const {
  return {{"components", cfg_.components}, {"hidden", cfg_.hidden}, {"variance_floor", cfg_.variance_floor}};
}

}  // namespace nsm::surrogate
