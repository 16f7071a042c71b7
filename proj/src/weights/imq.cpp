#include "nsm/weights/imq.hpp"

#include <cmath>
#include <stdexcept>

#include "nsm/core/error.hpp"
#include "nsm/core/io.hpp"

namespace nsm::weights {

ImqWeight ImqWeight::constant(Index dim) {
  ImqWeight w;
  w.constant_ = true;
  w.zeta_ = std::numeric_limits<double>::infinity();
  w.location_ = Vec::Zero(dim);
  w.precision_ = Mat::Zero(dim, dim);
  return w;
}

ImqWeight::ImqWeight(double zeta, Vec location, const Mat& scatter) : zeta_(zeta), location_(std::move(location)) {
  if (!(zeta > 0)) throw std::invalid_argument("IMQ weight: zeta must be positive");
  if (std::isinf(zeta)) {
    *this = constant(location_.size());
    return;
  }
  Eigen::LLT<Mat> llt(scatter);
  if (llt.info() != Eigen::Success) throw NumericError("IMQ weight: scatter matrix is not positive definite");
  precision_ = llt.solve(Mat::Identity(scatter.rows(), scatter.cols()));
  precision_ = 0.5 * (precision_ + precision_.transpose());
}

ImqWeight ImqWeight::fit(const Mat& data, double zeta, ScatterMethod method, std::uint64_t seed) {
  if (std::isinf(zeta)) return constant(data.cols());
  const LocationScatter ls = robust_location_scatter(data, method, seed);
  return ImqWeight(zeta, ls.location, ls.scatter);
}

double ImqWeight::weight(const Vec& x) const {
  if (constant_) return 1.0;
  const Vec c = x - location_;
  return std::pow(1.0 + c.dot(precision_ * c), -1.0 / zeta_);
}

ImqWeight::Value ImqWeight::eval(const Vec& x) const {
  Value v;
  if (constant_) {
    v.grad_w2 = Vec::Zero(x.size());
    return v;
  }
  const Vec c = x - location_;
  const Vec pc = precision_ * c;
  const double q = 1.0 + c.dot(pc);
  v.w2 = std::pow(q, -2.0 / zeta_);
  v.grad_w2 = (-(4.0 / zeta_) * std::pow(q, -2.0 / zeta_ - 1.0)) * pc;
  return v;
}

Vec ImqWeight::weight_sq_grad(const Vec& x) const { return eval(x).grad_w2; }

double ImqWeight::grad_bound() const {
  if (constant_) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(precision_);
  return (4.0 / zeta_) * es.eigenvalues().maxCoeff() / std::sqrt(es.eigenvalues().minCoeff());
}

nlohmann::json ImqWeight::to_json() const {
  if (constant_) return {{"constant", true}, {"dim", location_.size()}};
  return {{"constant", false}, {"zeta", zeta_}, {"location", io::to_json(location_)}, {"precision", io::to_json(precision_)}};
}

ImqWeight ImqWeight::from_json(const nlohmann::json& j) {
  try {
    if (j.at("constant").get<bool>()) return constant(j.at("dim").get<Index>());
    ImqWeight w;
    w.zeta_ = j.at("zeta").get<double>();
    w.location_ = io::vec_from_json(j.at("location"));
    w.precision_ = io::mat_from_json(j.at("precision"));
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("bad weight entry: ") + e.what());
  }
}

}  // namespace nsm::weights
