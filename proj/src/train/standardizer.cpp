#include "nsm/train/standardizer.hpp"

#include <cmath>
#include <stdexcept>

#include "nsm/core/error.hpp"
#include "nsm/core/io.hpp"

namespace nsm {

Standardizer Standardizer::identity(Index dim) { return {Vec::Zero(dim), Vec::Ones(dim)}; }

Standardizer Standardizer::fit(const Mat& rows) {
  if (rows.rows() < 1) throw std::invalid_argument("standardizer: no rows");
  Standardizer s;
  s.shift = rows.colwise().mean().transpose();
  s.scale.resize(rows.cols());
  for (Index j = 0; j < rows.cols(); ++j) {
    const double var = (rows.col(j).array() - s.shift(j)).square().mean();
    double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(s.shift(j))))) {
      warn("standardizer: column " + std::to_string(j) + " is constant; using unit scale");
      sd = 1.0;
    }
    s.scale(j) = sd;
  }
  return s;
}

Vec Standardizer::transform(const Vec& x) const { return ((x - shift).array() / scale.array()).matrix(); }
Vec Standardizer::inverse(const Vec& z) const { return (z.array() * scale.array()).matrix() + shift; }

Mat Standardizer::transform_rows(const Mat& X) const {
  return ((X.rowwise() - shift.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

Mat Standardizer::inverse_rows(const Mat& Z) const {
  return (Z.array().rowwise() * scale.transpose().array()).matrix().rowwise() + shift.transpose();
}

nlohmann::json Standardizer::to_json() const { return {{"shift", io::to_json(shift)}, {"scale", io::to_json(scale)}}; }

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  try {
    return {io::vec_from_json(j.at("shift")), io::vec_from_json(j.at("scale"))};
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("bad standardizer entry: ") + e.what());
  }
}

}  // namespace nsm
