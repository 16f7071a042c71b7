#include "nsm/experiment/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "nsm/core/error.hpp"
#include "nsm/core/io.hpp"

namespace nsm::experiment {

namespace {

// Rejects keys outside `allowed` so typos fail loudly.
void check_keys(const YAML::Node& node, const std::string& where, std::set<std::string> allowed) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError("config: '" + where + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  if (!node || !node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception& e) {
    throw ConfigError("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

}  // namespace

Method parse_method(const std::string& s) {
  if (s == "nle") return Method::nle;
  if (s == "nsm") return Method::nsm;
  if (s == "nsm-conj") return Method::nsm_conj;
  throw ConfigError("config: unknown method '" + s + "' (expected nle, nsm or nsm-conj)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::nle: return "nle";
    case Method::nsm: return "nsm";
    case Method::nsm_conj: return "nsm-conj";
  }
  return "nle";
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");
  check_keys(root, "", {"seed", "simulator", "budget", "observed", "method", "surrogate", "training", "weight",
                        "calibration", "inference", "sampler", "metrics"});
  ExperimentConfig c;
  if (root["seed"]) {
    read(root, "seed", c.seed, "");
    c.seed_set = true;
  }

  const auto s = root["simulator"];
  if (s && s.IsScalar()) {
    c.simulator = s.as<std::string>();
  } else {
    check_keys(s, "simulator", {"name", "population", "horizon_steps", "dt_days", "bandwidth_hz", "frequency_points",
                                "moments"});
    read(s, "name", c.simulator, "simulator");
    read(s, "population", c.sir.population, "simulator");
    read(s, "horizon_steps", c.sir.horizon, "simulator");
    read(s, "dt_days", c.sir.dt, "simulator");
    read(s, "bandwidth_hz", c.turin.bandwidth, "simulator");
    read(s, "frequency_points", c.turin.points, "simulator");
    read(s, "moments", c.turin.moments, "simulator");
  }

  check_keys(root["budget"], "budget", {"simulations"});
  read(root["budget"], "simulations", c.simulations, "budget");

  const auto o = root["observed"];
  check_keys(o, "observed", {"n", "theta_star", "contamination"});
  read(o, "n", c.observed_n, "observed");
  if (o && o["theta_star"]) {
    std::vector<double> v;
    read(o, "theta_star", v, "observed");
    c.theta_star = Eigen::Map<Vec>(v.data(), static_cast<Index>(v.size()));
  }
  if (o && o["contamination"]) {
    const auto k = o["contamination"];
    check_keys(k, "observed.contamination", {"kind", "epsilon", "shift", "retention", "cauchy_scale"});
    std::string kind = "none";
    read(k, "kind", kind, "observed.contamination");
    c.contamination.kind = sim::parse_contamination(kind);
    read(k, "epsilon", c.contamination.epsilon, "observed.contamination");
    read(k, "shift", c.contamination.shift, "observed.contamination");
    read(k, "retention", c.contamination.retention, "observed.contamination");
    read(k, "cauchy_scale", c.contamination.cauchy_scale, "observed.contamination");
  }

  if (root["method"]) c.method = parse_method(root["method"].as<std::string>());

  const auto m = root["surrogate"];
  check_keys(m, "surrogate", {"family", "hidden", "components", "transforms", "variance_floor", "standardise_theta"});
  read(m, "family", c.family, "surrogate");
  read(m, "hidden", c.hidden, "surrogate");
  read(m, "components", c.components, "surrogate");
  read(m, "transforms", c.transforms, "surrogate");
  read(m, "variance_floor", c.variance_floor, "surrogate");
  read(m, "standardise_theta", c.standardise_theta, "surrogate");

  const auto t = root["training"];
  check_keys(t, "training", {"learning_rate", "weight_decay", "batch_size", "max_epochs", "validation_fraction",
                             "patience"});
  read(t, "learning_rate", c.training.learning_rate, "training");
  read(t, "weight_decay", c.training.weight_decay, "training");
  read(t, "batch_size", c.training.batch_size, "training");
  read(t, "max_epochs", c.training.max_epochs, "training");
  read(t, "validation_fraction", c.training.val_fraction, "training");
  read(t, "patience", c.training.patience, "training");

  const auto w = root["weight"];
  check_keys(w, "weight", {"zeta", "scatter"});
  read(w, "zeta", c.zeta, "weight");
  if (w && w["scatter"]) c.scatter = weights::parse_scatter_method(w["scatter"].as<std::string>());

  const auto k = root["calibration"];
  check_keys(k, "calibration", {"enabled", "alpha", "bootstraps", "steps", "beta0", "draws", "warmup", "ess_floor",
                                "ess_abort"});
  read(k, "enabled", c.calibrate, "calibration");
  read(k, "alpha", c.calibration.alpha, "calibration");
  read(k, "bootstraps", c.calibration.bootstraps, "calibration");
  read(k, "steps", c.calibration.steps, "calibration");
  read(k, "beta0", c.calibration.beta0, "calibration");
  read(k, "draws", c.calibration.draws, "calibration");
  read(k, "warmup", c.calibration.warmup, "calibration");
  read(k, "ess_floor", c.calibration.ess_floor, "calibration");
  read(k, "ess_abort", c.calibration.ess_abort, "calibration");

  check_keys(root["inference"], "inference", {"beta"});
  read(root["inference"], "beta", c.beta, "inference");

  const auto sp = root["sampler"];
  check_keys(sp, "sampler", {"draws", "warmup"});
  read(sp, "draws", c.draws, "sampler");
  read(sp, "warmup", c.warmup, "sampler");

  const auto mt = root["metrics"];
  if (mt && mt.IsSequence()) {
    read(root, "metrics", c.metrics, "");
  } else if (mt) {
    check_keys(mt, "metrics", {"compute", "reference_samples"});
    read(mt, "compute", c.metrics, "metrics");
    if (mt["reference_samples"]) c.reference_samples = mt["reference_samples"].as<std::string>();
  }

  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  const auto sim = make_simulator();  // throws on unknown names
  if (simulations < 10) throw ConfigError("config: budget.simulations must be at least 10");
  if (observed_n < 2) throw ConfigError("config: observed.n must be at least 2");
  if (theta_star && theta_star->size() != sim->theta_dim())
    throw ConfigError("config: observed.theta_star needs " + std::to_string(sim->theta_dim()) + " entries");
  contamination.validate();
  const auto fam = surrogate_family();
  if (fam != "mdn" && fam != "maf" && fam != "ebm") throw ConfigError("config: unknown surrogate family '" + fam + "'");
  if (method == Method::nsm_conj && fam != "ebm") throw ConfigError("config: nsm-conj needs the ebm surrogate");
  if (method != Method::nsm_conj && fam == "ebm") throw ConfigError("config: the ebm surrogate is only for nsm-conj");
  if (fam == "ebm" && hidden.size() > 1) throw ConfigError("config: the ebm supports at most one hidden layer");
  for (Index h : hidden)
    if (h < 1) throw ConfigError("config: hidden widths must be positive");
  if (components < 1 || transforms < 1) throw ConfigError("config: components and transforms must be positive");
  if (!(zeta > 0)) throw ConfigError("config: weight.zeta must be positive");
  if (!(beta > 0)) throw ConfigError("config: inference.beta must be positive");
  if (draws < 2 || warmup < 0) throw ConfigError("config: sampler.draws >= 2 and warmup >= 0 required");
  training.validate();
  calibration.validate();
  for (const auto& m : metrics)
    if (m != "mse" && m != "coverage" && m != "mmd") throw ConfigError("config: unknown metric '" + m + "'");
}

std::unique_ptr<sim::Simulator> ExperimentConfig::make_simulator() const {
  if (simulator == "sir") return std::make_unique<sim::Sir>(sir);
  if (simulator == "turin") return std::make_unique<sim::Turin>(turin);
  return sim::make_simulator(simulator);
}

std::string ExperimentConfig::surrogate_family() const {
  if (!family.empty()) return family;
  if (method == Method::nsm_conj) return "ebm";
  return simulator == "turin" ? "mdn" : "maf";
}

Vec ExperimentConfig::true_theta() const { return theta_star ? *theta_star : make_simulator()->theta_star(); }

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["simulator"] = {{"name", simulator}, {"constants", make_simulator()->constants()}};
  j["budget"] = {{"simulations", simulations}};
  j["observed"] = {{"n", observed_n}, {"theta_star", io::to_json(true_theta())}, {"contamination", contamination.to_json()}};
  j["method"] = to_string(method);
  j["surrogate"] = {{"family", surrogate_family()},     {"hidden", hidden},
                    {"components", components},         {"transforms", transforms},
                    {"variance_floor", variance_floor}, {"standardise_theta", standardise_theta}};
  j["training"] = training.to_json();
  j["weight"] = {{"zeta", zeta}, {"scatter", weights::to_string(scatter)}};
  j["calibration"] = {{"enabled", calibrate},          {"alpha", calibration.alpha},
                      {"bootstraps", calibration.bootstraps}, {"steps", calibration.steps},
                      {"beta0", calibration.beta0},    {"draws", calibration.draws},
                      {"warmup", calibration.warmup},  {"ess_floor", calibration.ess_floor},
                      {"ess_abort", calibration.ess_abort}};
  j["inference"] = {{"beta", beta}};
  j["sampler"] = {{"draws", draws}, {"warmup", warmup}};
  j["metrics"] = metrics;
  if (reference_samples) j["reference_samples"] = reference_samples->string();
  return j;
}

}  // namespace nsm::experiment
