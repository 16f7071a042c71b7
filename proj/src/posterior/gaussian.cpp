#include "nsm/posterior/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "nsm/core/error.hpp"
#include "nsm/core/io.hpp"

namespace nsm::posterior {

Eigen::LLT<Mat> spd_factor(const Mat& M, const std::string& what) {
  Eigen::LLT<Mat> llt(M);
  const bool bad = llt.info() != Eigen::Success || !Mat(llt.matrixL()).diagonal().allFinite() ||
                   Mat(llt.matrixL()).diagonal().minCoeff() <= 0;
  if (bad) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    std::ostringstream os;
    os << what << " is not positive definite (eigenvalues in [" << es.eigenvalues().minCoeff() << ", "
       << es.eigenvalues().maxCoeff() << "], condition number "
       << es.eigenvalues().cwiseAbs().maxCoeff() / es.eigenvalues().cwiseAbs().minCoeff() << ")";
    throw NumericError(os.str());
  }
  return llt;
}

GaussianPrior::GaussianPrior(Vec m, Mat c) : mean(std::move(m)), cov(std::move(c)) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size()) throw std::invalid_argument("prior: shape mismatch");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * cov.cwiseAbs().maxCoeff())
    throw std::invalid_argument("prior: covariance is not symmetric");
  spd_factor(cov, "prior covariance");
}

double GaussianPrior::log_density(const Vec& theta) const {
  const auto llt = cov.llt();
  const Vec r = llt.matrixL().solve(theta - mean);
  const double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * r.squaredNorm() - 0.5 * logdet - 0.5 * static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi);
}

Mat GaussianPrior::precision() const { return cov.llt().solve(Mat::Identity(dim(), dim())); }

Mat GaussianPrior::sample(Index count, Rng& rng) const {
  std::normal_distribution<double> n01;
  const Mat L = cov.llt().matrixL();
  Mat out(count, dim());
  Vec z(dim());
  for (Index r = 0; r < count; ++r) {
    for (Index j = 0; j < dim(); ++j) z(j) = n01(rng);
    out.row(r) = (mean + L * z).transpose();
  }
  return out;
}

nlohmann::json GaussianPosterior::to_json() const {
  return {{"mean", io::to_json(mean)}, {"cov", io::to_json(cov)}, {"beta", beta}, {"provenance", provenance}};
}

GaussianPosterior GaussianPosterior::from_json(const nlohmann::json& j) {
  try {
    GaussianPosterior p;
    p.mean = io::vec_from_json(j.at("mean"));
    p.cov = io::mat_from_json(j.at("cov"));
    p.beta = j.at("beta").get<double>();
    if (j.contains("provenance")) p.provenance = j.at("provenance");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("bad posterior file: ") + e.what());
  }
}

GaussianPosterior GaussianPosterior::from_samples(const Mat& draws) {
  if (draws.rows() < 2) throw std::invalid_argument("posterior summary needs at least two draws");
  GaussianPosterior p;
  p.mean = draws.colwise().mean().transpose();
  const Mat c = draws.rowwise() - p.mean.transpose();
  p.cov = (c.transpose() * c) / static_cast<double>(draws.rows() - 1);
  return p;
}

}  // namespace nsm::posterior
