#include "nsm/surrogate/ebm.hpp"

#include <stdexcept>

namespace nsm::surrogate {

nets::MlpSpec ExpFamEbm::spec(Index x_dim, Index out, const std::vector<Index>& hidden, const std::string& head) {
  nets::MlpSpec s;
  s.input_dim = x_dim;
  s.cond_dim = 0;
  s.hidden = hidden;
  s.heads = {{head, out, false}};
  return s;
}

ExpFamEbm::ExpFamEbm(Index x_dim, Index theta_dim, EbmConfig cfg, Rng& rng)
    : Surrogate(x_dim, theta_dim), cfg_(std::move(cfg)) {
  nets_.emplace_back(spec(x_dim, theta_dim, cfg_.hidden_T, "T"), rng);
  nets_.emplace_back(spec(x_dim, 1, cfg_.hidden_b, "b"), rng);
}

ExpFamEbm::ExpFamEbm(Index x_dim, Index theta_dim, EbmConfig cfg) : Surrogate(x_dim, theta_dim), cfg_(std::move(cfg)) {
  nets_.emplace_back(spec(x_dim, theta_dim, cfg_.hidden_T, "T"));
  nets_.emplace_back(spec(x_dim, 1, cfg_.hidden_b, "b"));
}

EbmFeatures ExpFamEbm::features(const Vec& x, bool full_hessians) const {
  const Vec z = x_std_.transform(x);
  const auto mode = full_hessians ? nets::HessianMode::full : nets::HessianMode::diagonal;
  const auto dT = nets_[0].derivatives(z, Vec(), mode)[0];
  const auto db = nets_[1].derivatives(z, Vec(), mode)[0];
  const Vec inv = x_std_.scale.cwiseInverse();
  const Vec inv2 = inv.cwiseAbs2();

  EbmFeatures f;
  f.T = dT.value;
  f.b = db.value(0);
  f.grad_T = dT.jacobian * inv.asDiagonal();
  f.grad_b = (db.jacobian.row(0).transpose().array() * inv.array()).matrix();
  if (full_hessians) {
    for (const Mat& H : dT.hessians) f.hess_T.push_back(inv.asDiagonal() * H * inv.asDiagonal());
    f.hess_b = inv.asDiagonal() * db.hessians[0] * inv.asDiagonal();
    f.lap_T.resize(theta_dim_);
    for (Index k = 0; k < theta_dim_; ++k) f.lap_T(k) = f.hess_T[static_cast<std::size_t>(k)].trace();
    f.lap_b = f.hess_b.trace();
  } else {
    f.lap_T = dT.hessian_diag * inv2;
    f.lap_b = db.hessian_diag.row(0).dot(inv2);
  }

  if (cfg_.standardise_theta) {
    // T'(theta - a)/c  =  (T/c)'theta - (a/c)'T
    const Vec c_inv = theta_std_.scale.cwiseInverse();
    const Vec coef = theta_std_.shift.cwiseProduct(c_inv);
    f.b -= coef.dot(f.T);
    f.grad_b -= f.grad_T.transpose() * coef;
    f.lap_b -= coef.dot(f.lap_T);
    if (full_hessians)
      for (Index k = 0; k < theta_dim_; ++k) f.hess_b -= coef(k) * f.hess_T[static_cast<std::size_t>(k)];
    f.T = f.T.cwiseProduct(c_inv);
    f.grad_T = c_inv.asDiagonal() * f.grad_T;
    f.lap_T = f.lap_T.cwiseProduct(c_inv);
    for (Index k = 0; k < static_cast<Index>(f.hess_T.size()); ++k) f.hess_T[static_cast<std::size_t>(k)] *= c_inv(k);
  }
  return f;
}

double ExpFamEbm::log_density(const Vec& x, const Vec& theta) const {
  const EbmFeatures f = features(x);
  return f.T.dot(theta) + f.b;
}

ScoreTrace ExpFamEbm::score_trace(const Vec& x, const Vec& theta) const {
  const EbmFeatures f = features(x);
  return {f.grad_T.transpose() * theta + f.grad_b, f.lap_T.dot(theta) + f.lap_b};
}

Mat ExpFamEbm::hessian_x(const Vec& x, const Vec& theta) const {
  const EbmFeatures f = features(x, true);
  Mat H = f.hess_b;
  for (Index k = 0; k < theta_dim_; ++k) H += theta(k) * f.hess_T[static_cast<std::size_t>(k)];
  return H;
}

diff::Var ExpFamEbm::record_objective(diff::Tape& tape, const Mat& Z, const Mat& Th) const {
  using namespace diff;
  const Index B = Z.rows(), d = x_dim_;
  Var Zv = tape.constant(Z);

  // score and Laplacian of C(row) . head(z) for one network
  struct Part {
    Var score;
    Var lap;
    bool has_lap = false;
  };
  auto part = [&](const nets::Mlp& net, std::size_t off, Var C) -> Part {
    const auto& blk = net.blocks();
    if (net.hidden_count() == 0) {
      Var W = tape.param(off + blk[0].w, blk[0].out, blk[0].in);
      return {matmul(C, W), Var{}, false};
    }
    if (net.hidden_count() != 1)
      throw std::invalid_argument("score-matching objective supports at most one hidden layer per network");
    const Index H = blk[0].out;
    Var W1 = tape.param(off + blk[0].w, H, d);
    Var b1 = tape.param(off + blk[0].b, 1, H);
    Var W2 = tape.param(off + blk[1].w, blk[1].out, H);
    Var h = tanh(matmul(Zv, W1, false, true) + b1);
    Var D = affine(square(h), -1.0, 1.0);
    Var DG = D * matmul(C, W2);
    Var wn = matmul(tape.constant(Mat::Ones(1, d)), square(W1), false, true);
    Var lap = affine(matmul(DG * h * wn, tape.constant(Mat::Ones(H, 1))), -2.0);
    return {matmul(DG, W1), lap, true};
  };

  Part pT = part(nets_[0], 0, tape.constant(Th));
  Part pb = part(nets_[1], static_cast<std::size_t>(nets_[0].param_count()), tape.constant(Mat::Ones(B, 1)));
  Var J = sum(square(pT.score + pb.score));
  if (pT.has_lap) J = J + affine(sum(pT.lap), 2.0);
  if (pb.has_lap) J = J + affine(sum(pb.lap), 2.0);
  return affine(J, 1.0 / static_cast<double>(B));
}

nlohmann::json ExpFamEbm::hyperparameters() const {
  return {{"hidden_T", cfg_.hidden_T}, {"hidden_b", cfg_.hidden_b}, {"standardise_theta", cfg_.standardise_theta}};
}

}  // namespace nsm::surrogate
