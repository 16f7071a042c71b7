#include "nsm/surrogate/surrogate.hpp"

#include <stdexcept>

#include "nsm/core/error.hpp"
#include "nsm/core/io.hpp"
#include "nsm/surrogate/ebm.hpp"
#include "nsm/surrogate/maf.hpp"
#include "nsm/surrogate/mdn.hpp"

namespace nsm::surrogate {

Surrogate::Surrogate(Index x_dim, Index theta_dim)
    : x_dim_(x_dim),
      theta_dim_(theta_dim),
      x_std_(Standardizer::identity(x_dim)),
      theta_std_(Standardizer::identity(theta_dim)) {
  if (x_dim <= 0 || theta_dim <= 0) throw std::invalid_argument("surrogate: dimensions must be positive");
}

double Surrogate::log_density_sum(const Mat& X, const Vec& theta) const {
  double s = 0.0;
  for (Index i = 0; i < X.rows(); ++i) s += log_density(X.row(i).transpose(), theta);
  return s;
}

Index Surrogate::param_count() const {
  Index n = 0;
  for (const auto& net : nets_) n += net.param_count();
  return n;
}

Vec Surrogate::params() const {
  Vec p(param_count());
  Index off = 0;
  for (const auto& net : nets_) {
    p.segment(off, net.param_count()) = net.params();
    off += net.param_count();
  }
  return p;
}

void Surrogate::set_params(const Vec& p) {
  if (p.size() != param_count()) throw std::invalid_argument("surrogate: parameter count mismatch");
  Index off = 0;
  for (auto& net : nets_) {
    net.set_params(p.segment(off, net.param_count()));
    off += net.param_count();
  }
}

void Surrogate::set_standardizers(Standardizer x, Standardizer theta) {
  if (x.dim() != x_dim_ || theta.dim() != theta_dim_) throw std::invalid_argument("surrogate: standardizer dimension");
  x_std_ = std::move(x);
  theta_std_ = std::move(theta);
}

void Surrogate::save(const std::filesystem::path& dir, const std::string& name) const {
  std::filesystem::create_directories(dir);
  io::json m;
  m["family"] = family();
  m["x_dim"] = x_dim_;
  m["theta_dim"] = theta_dim_;
  m["hyperparameters"] = hyperparameters();
  m["x_standardizer"] = x_std_.to_json();
  m["theta_standardizer"] = theta_std_.to_json();
  m["networks"] = io::json::array();
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    const std::string stem = name + ".net" + std::to_string(i);
    nets_[i].save(dir / stem);
    m["networks"].push_back(stem);
  }
  io::write_json(dir / (name + ".json"), m);
}

std::unique_ptr<Surrogate> load_surrogate(const std::filesystem::path& manifest) {
  const io::json m = io::read_json(manifest);
  std::unique_ptr<Surrogate> out;
  try {
    const std::string family = m.at("family").get<std::string>();
    const Index dx = m.at("x_dim").get<Index>();
    const Index dt = m.at("theta_dim").get<Index>();
    const io::json& h = m.at("hyperparameters");
    if (family == "mdn") {
      MdnConfig c;
      c.components = h.at("components").get<Index>();
      c.hidden = h.at("hidden").get<std::vector<Index>>();
      c.variance_floor = h.at("variance_floor").get<double>();
      out = std::make_unique<Mdn>(dx, dt, c);
    } else if (family == "maf") {
      MafConfig c;
      c.transforms = h.at("transforms").get<Index>();
      c.hidden = h.at("hidden").get<std::vector<Index>>();
      out = std::make_unique<Maf>(dx, dt, c);
    } else if (family == "ebm") {
      EbmConfig c;
      c.hidden_T = h.at("hidden_T").get<std::vector<Index>>();
      c.hidden_b = h.at("hidden_b").get<std::vector<Index>>();
      c.standardise_theta = h.at("standardise_theta").get<bool>();
      out = std::make_unique<ExpFamEbm>(dx, dt, c);
    } else {
      throw ManifestError("unknown surrogate family '" + family + "' in " + manifest.string());
    }
    const auto stems = m.at("networks").get<std::vector<std::string>>();
    if (stems.size() != out->nets_.size()) throw ManifestError("network count mismatch in " + manifest.string());
    for (std::size_t i = 0; i < stems.size(); ++i) {
      nets::Mlp net = nets::Mlp::load(manifest.parent_path() / stems[i]);
      if (net.param_count() != out->nets_[i].param_count())
        throw ManifestError("network " + stems[i] + " does not match the declared hyperparameters");
      out->nets_[i] = std::move(net);
    }
    out->set_standardizers(Standardizer::from_json(m.at("x_standardizer")),
                           Standardizer::from_json(m.at("theta_standardizer")));
  } catch (const io::json::exception& e) {
    throw ManifestError("bad surrogate manifest " + manifest.string() + ": " + e.what());
  }
  return out;
}

}  // namespace nsm::surrogate
