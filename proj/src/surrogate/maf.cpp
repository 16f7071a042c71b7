#include "nsm/surrogate/maf.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "nsm/core/error.hpp"

namespace nsm::surrogate {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Mat reversal(Index d) { return Mat::Identity(d, d).rowwise().reverse(); }

}  // namespace

nets::MlpSpec Maf::spec(Index x_dim, Index theta_dim, const MafConfig& cfg) {
  nets::MlpSpec s;
  s.input_dim = x_dim;
  s.cond_dim = theta_dim;
  s.hidden = cfg.hidden;
  s.masked = true;
  s.heads = {{"mu", x_dim, false}, {"sigma", x_dim, true}};
  return s;
}

Maf::Maf(Index x_dim, Index theta_dim, MafConfig cfg, Rng& rng) : Surrogate(x_dim, theta_dim), cfg_(std::move(cfg)) {
  if (cfg_.transforms < 1) throw std::invalid_argument("maf: need at least one transform");
  for (Index l = 0; l < cfg_.transforms; ++l) nets_.emplace_back(spec(x_dim, theta_dim, cfg_), rng);
}

Maf::Maf(Index x_dim, Index theta_dim, MafConfig cfg) : Surrogate(x_dim, theta_dim), cfg_(std::move(cfg)) {
  if (cfg_.transforms < 1) throw std::invalid_argument("maf: need at least one transform");
  for (Index l = 0; l < cfg_.transforms; ++l) nets_.emplace_back(spec(x_dim, theta_dim, cfg_));
}

Vec Maf::to_base(const Vec& x, const Vec& theta) const {
  const Vec t = theta_std_.transform(theta);
  Vec v = x_std_.transform(x);
  const std::size_t L = nets_.size();
  for (std::size_t l = 0; l < L; ++l) {
    auto out = nets_[l].forward(v, t);
    Vec u = ((v - out[0]).array() / out[1].array()).matrix();
    v = l + 1 < L ? Vec(u.reverse()) : u;
  }
  return v;
}

Vec Maf::from_base(const Vec& z, const Vec& theta) const {
  const Vec t = theta_std_.transform(theta);
  const Index d = x_dim_;
  Vec cur = z;
  for (std::size_t l = nets_.size(); l-- > 0;) {
    const Vec u = l + 1 < nets_.size() ? Vec(cur.reverse()) : cur;
    Vec v = Vec::Zero(d);
    for (Index i = 0; i < d; ++i) {
      auto out = nets_[l].forward(v, t);
      v(i) = u(i) * out[1](i) + out[0](i);
    }
    cur = v;
  }
  return x_std_.inverse(cur);
}

Mat Maf::sample(const Vec& theta, Index count, Rng& rng) const {
  std::normal_distribution<double> n01;
  Mat out(count, x_dim_);
  Vec z(x_dim_);
  for (Index r = 0; r < count; ++r) {
    for (Index j = 0; j < x_dim_; ++j) z(j) = n01(rng);
    out.row(r) = from_base(z, theta).transpose();
  }
  return out;
}

Maf::Derivs Maf::derivatives(const Vec& zx, const Vec& t, bool hessian) const {
  const Index d = x_dim_;
  const std::size_t L = nets_.size();
  Vec v = zx;
  Mat J = Mat::Identity(d, d);
  std::vector<Mat> H(static_cast<std::size_t>(d), Mat::Zero(d, d));
  double logsig = 0.0;
  Vec g_logsig = Vec::Zero(d);
  Mat H_logsig = Mat::Zero(d, d);

  for (std::size_t l = 0; l < L; ++l) {
    auto der = nets_[l].derivatives(v, t, hessian ? nets::HessianMode::full : nets::HessianMode::none);
    const auto& mu = der[0];
    const auto& sg = der[1];
    Vec u(d);
    Mat Lu(d, d);
    std::vector<Mat> Hu(static_cast<std::size_t>(d));
    Vec g_local = Vec::Zero(d);
    Mat G_local = Mat::Zero(d, d);
    std::vector<Mat> Gs(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) {
      const double s = sg.value(i);
      u(i) = (v(i) - mu.value(i)) / s;
      logsig += std::log(s);
      const Vec gs = sg.jacobian.row(i).transpose();
      Vec N = -mu.jacobian.row(i).transpose() - u(i) * gs;
      N(i) += 1.0;
      const Vec gu = N / s;
      Lu.row(i) = gu.transpose();
      g_local += gs / s;
      if (hessian) {
        const auto k = static_cast<std::size_t>(i);
        Hu[k] = (-mu.hessians[k] - gs * gu.transpose() - u(i) * sg.hessians[k] - gu * gs.transpose()) / s;
        Gs[k] = sg.hessians[k] / s - (gs * gs.transpose()) / (s * s);
      }
    }
    // chain rule back to the standardised input
    g_logsig += J.transpose() * g_local;
    if (hessian) {
      std::vector<Mat> Hn(static_cast<std::size_t>(d));
      for (Index i = 0; i < d; ++i) {
        const auto k = static_cast<std::size_t>(i);
        H_logsig += J.transpose() * Gs[k] * J;
        Hn[k] = J.transpose() * Hu[k] * J;
        for (Index a = 0; a < d; ++a) {
          const auto ka = static_cast<std::size_t>(a);
          H_logsig += (sg.jacobian(i, a) / sg.value(i)) * H[ka];
          Hn[k] += Lu(i, a) * H[ka];
        }
      }
      H = std::move(Hn);
    }
    J = Lu * J;
    if (l + 1 < L) {
      v = u.reverse();
      J = Mat(J.colwise().reverse());
      std::reverse(H.begin(), H.end());
    } else {
      v = u;
    }
  }

  Derivs out;
  out.log_q = -0.5 * v.squaredNorm() - 0.5 * static_cast<double>(d) * kLog2Pi - logsig;
  out.score = -J.transpose() * v - g_logsig;
  if (hessian) {
    out.hessian = -J.transpose() * J - H_logsig;
    for (Index i = 0; i < d; ++i) out.hessian -= v(i) * H[static_cast<std::size_t>(i)];
  }
  return out;
}

double Maf::log_density(const Vec& x, const Vec& theta) const {
  const double v =
      derivatives(x_std_.transform(x), theta_std_.transform(theta), false).log_q - x_std_.log_scale_sum();
  if (!std::isfinite(v)) throw NumericError("maf: non-finite log density");
  return v;
}

double Maf::log_density_sum(const Mat& X, const Vec& theta) const {
  const Mat t = theta_std_.transform(theta).transpose();
  Mat V = x_std_.transform_rows(X);
  double logsig = 0.0;
  const std::size_t L = nets_.size();
  for (std::size_t l = 0; l < L; ++l) {
    auto out = nets_[l].forward_batch(V, t);
    Mat U = ((V - out[0]).array() / out[1].array()).matrix();
    logsig += out[1].array().log().sum();
    V = l + 1 < L ? Mat(U.rowwise().reverse()) : U;
  }
  const double n = static_cast<double>(X.rows());
  const double s = -0.5 * V.squaredNorm() - 0.5 * n * static_cast<double>(x_dim_) * kLog2Pi - logsig -
                   n * x_std_.log_scale_sum();
  if (!std::isfinite(s)) throw NumericError("maf: non-finite log density");
  return s;
}

ScoreTrace Maf::score_trace(const Vec& x, const Vec& theta) const {
  const Derivs d = derivatives(x_std_.transform(x), theta_std_.transform(theta), true);
  ScoreTrace st;
  st.score = (d.score.array() / x_std_.scale.array()).matrix();
  st.trace = (d.hessian.diagonal().array() / x_std_.scale.array().square()).sum();
  return st;
}

Mat Maf::hessian_x(const Vec& x, const Vec& theta) const {
  const Derivs d = derivatives(x_std_.transform(x), theta_std_.transform(theta), true);
  const Vec inv = x_std_.scale.cwiseInverse();
  return inv.asDiagonal() * d.hessian * inv.asDiagonal();
}

diff::Var Maf::record_objective(diff::Tape& tape, const Mat& Z, const Mat& Th) const {
  using namespace diff;
  const Index d = x_dim_, B = Z.rows();
  Var V = tape.constant(Z);
  Var T = tape.constant(Th);
  Var P = tape.constant(reversal(d));
  Var logsig = tape.scalar(0.0);
  std::size_t offset = 0;
  const std::size_t L = nets_.size();
  for (std::size_t l = 0; l < L; ++l) {
    auto heads = nets_[l].record(tape, V, T, offset);
    offset += static_cast<std::size_t>(nets_[l].param_count());
    Var U = (V - heads[0]) * reciprocal(heads[1]);
    logsig = logsig + sum(log(heads[1]));
    V = l + 1 < L ? matmul(U, P) : U;
  }
  Var nll = affine(sum(square(V)), 0.5) + logsig;
  return affine(nll, 1.0 / static_cast<double>(B), 0.5 * static_cast<double>(d) * kLog2Pi);
}

nlohmann::json Maf::hyperparameters() const { return {{"transforms", cfg_.transforms}, {"hidden", cfg_.hidden}}; }

}  // namespace nsm::surrogate
