#include "nsm/experiment/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "nsm/calibrate/calibrate.hpp"
#include "nsm/core/error.hpp"
#include "nsm/core/io.hpp"
#include "nsm/core/rng.hpp"
#include "nsm/loss/nsm_loss.hpp"
#include "nsm/metrics/metrics.hpp"
#include "nsm/posterior/posterior.hpp"
#include "nsm/simulators/simulators.hpp"
#include "nsm/surrogate/ebm.hpp"
#include "nsm/surrogate/maf.hpp"
#include "nsm/surrogate/mdn.hpp"
#include "nsm/train/train.hpp"
#include "nsm/weights/imq.hpp"

#ifndef NSM_GIT_DESCRIBE
#define NSM_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace nsm::experiment {

Stage parse_stage(const std::string& s) {
  for (Stage st : all_stages())
    if (to_string(st) == s) return st;
  throw ConfigError("unknown stage '" + s + "' (expected simulate, train, calibrate, infer or metrics)");
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::simulate: return "simulate";
    case Stage::train: return "train";
    case Stage::calibrate: return "calibrate";
    case Stage::infer: return "infer";
    case Stage::metrics: return "metrics";
  }
  return "simulate";
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> s{Stage::simulate, Stage::train, Stage::calibrate, Stage::infer, Stage::metrics};
  return s;
}

int exit_code_for(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->exit_code();
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const ManifestError*>(&e)) return 4;
  return 1;
}

std::string git_describe() { return NSM_GIT_DESCRIBE; }

std::string fingerprint(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ManifestError("missing file " + file.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::uint64_t stage_seed(std::uint64_t master, const std::string& stage) { return stream_id(master, label_id(stage)); }

fs::path stage_dir(const fs::path& out, Stage stage, const StageOptions& opt) {
  const auto name = to_string(stage);
  if (opt.observed && (stage == Stage::infer || stage == Stage::metrics))
    return out / (name + "_" + opt.observed->stem().string());
  return out / name;
}

namespace {

void require_seed(const ExperimentConfig& cfg) {
  if (!cfg.seed_set) throw ConfigError("config: 'seed' is mandatory (or pass --seed)");
}

json read_manifest(const fs::path& dir, const std::string& needed_by) {
  const auto p = dir / "manifest.json";
  if (!fs::exists(p))
    throw ManifestError(needed_by + ": no manifest in " + dir.string() + "; run the " + dir.filename().string() +
                        " stage first");
  try {
    return io::read_json(p);
  } catch (const std::exception& e) {
    throw ManifestError(needed_by + ": unreadable manifest " + p.string() + ": " + e.what());
  }
}

/// Every file recorded in the manifest must still carry the recorded fingerprint.
void verify_files(const fs::path& dir, const json& manifest, const std::string& needed_by) {
  for (const auto& [name, fp] : manifest.at("files").items()) {
    if (fingerprint(dir / name) != fp.get<std::string>())
      throw ManifestError(needed_by + ": " + (dir / name).string() + " changed after its manifest was written (stale)");
  }
}

void check_simulator(const json& manifest, const ExperimentConfig& cfg, const std::string& needed_by) {
  const auto sim = cfg.make_simulator();
  if (manifest.at("simulator") != sim->name() || manifest.at("constants") != sim->constants())
    throw ManifestError(needed_by + ": manifest is for simulator '" + manifest.at("simulator").get<std::string>() +
                        "' with different constants, config asks for '" + sim->name() + "'");
}

json base_manifest(Stage stage, const ExperimentConfig& cfg) {
  const auto sim = cfg.make_simulator();
  return {{"stage", to_string(stage)},
          {"simulator", sim->name()},
          {"constants", sim->constants()},
          {"seed", cfg.seed},
          {"method", to_string(cfg.method)},
          {"files", json::object()}};
}

void write_manifest(const fs::path& dir, json manifest) {
  for (auto& [name, fp] : manifest["files"].items()) fp = fingerprint(dir / name);
  io::write_json(dir / "manifest.json", manifest);
}

std::vector<std::string> model_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto n = e.path().filename().string();
    if (n.rfind("model", 0) == 0) names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::unique_ptr<surrogate::Surrogate> make_model(const ExperimentConfig& cfg, Index x_dim, Index theta_dim, Rng& rng) {
  const auto fam = cfg.surrogate_family();
  if (fam == "ebm") {
    surrogate::EbmConfig e;
    if (!cfg.hidden.empty()) e.hidden_T = e.hidden_b = cfg.hidden;
    e.standardise_theta = cfg.standardise_theta;
    return std::make_unique<surrogate::ExpFamEbm>(x_dim, theta_dim, e, rng);
  }
  if (fam == "mdn") {
    surrogate::MdnConfig m;
    m.components = cfg.components;
    m.variance_floor = cfg.variance_floor;
    if (!cfg.hidden.empty()) m.hidden = cfg.hidden;
    return std::make_unique<surrogate::Mdn>(x_dim, theta_dim, m, rng);
  }
  surrogate::MafConfig m;
  m.transforms = cfg.transforms;
  if (!cfg.hidden.empty()) m.hidden = cfg.hidden;
  return std::make_unique<surrogate::Maf>(x_dim, theta_dim, m, rng);
}

struct LoadedModel {
  std::unique_ptr<surrogate::Surrogate> model;
  std::string fingerprint;  // of the train manifest, which pins every model file
};

LoadedModel load_model(const ExperimentConfig& cfg, const fs::path& out, const std::string& needed_by) {
  const auto dir = out / "train";
  const auto man = read_manifest(dir, needed_by);
  check_simulator(man, cfg, needed_by);
  if (man.at("family") != cfg.surrogate_family())
    throw ManifestError(needed_by + ": trained model is a '" + man.at("family").get<std::string>() +
                        "' but the config needs '" + cfg.surrogate_family() + "'");
  verify_files(dir, man, needed_by);
  // A re-simulated bank makes the model stale.
  const auto sim_man = out / "simulate" / "manifest.json";
  if (fs::exists(sim_man) && io::read_json(sim_man).at("files").at("bank.csv") != man.at("bank_fingerprint"))
    throw ManifestError(needed_by + ": the simulation bank changed after training (stale model)");
  LoadedModel lm;
  lm.model = surrogate::load_surrogate(dir / "model.json");
  lm.fingerprint = fingerprint(dir / "manifest.json");
  return lm;
}

struct Observed {
  sim::Dataset data;
  std::string fingerprint;
  bool theta_known = false;
};

Observed load_default_observed(const ExperimentConfig& cfg, const fs::path& out, const std::string& needed_by) {
  const auto dir = out / "simulate";
  const auto man = read_manifest(dir, needed_by);
  check_simulator(man, cfg, needed_by);
  verify_files(dir, man, needed_by);
  Observed o;
  o.data = sim::Dataset::load(dir, "observed");
  o.fingerprint = man.at("files").at("observed.csv");
  o.theta_known = true;
  return o;
}

Observed load_external_observed(const ExperimentConfig& cfg, const fs::path& path) {
  const auto sim = cfg.make_simulator();
  Observed o;
  if (!fs::exists(path)) throw ConfigError("observed dataset " + path.string() + " does not exist");
  const auto dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  const auto stem = path.stem().string();
  if (fs::exists(dir / (stem + ".json"))) {
    o.data = sim::Dataset::load(dir, stem);
    if (o.data.simulator != sim->name())
      throw ManifestError("observed dataset was simulated by '" + o.data.simulator + "', config asks for '" +
                          sim->name() + "'");
    o.theta_known = o.data.theta.size() == sim->theta_dim();
  } else {
    const auto t = io::read_csv(path);
    Index cols = static_cast<Index>(t.header.size());
    if (cols > 0 && t.header.back() == "contaminated") --cols;
    if (cols != sim->x_dim())
      throw ConfigError("observed csv has " + std::to_string(cols) + " data columns, simulator '" + sim->name() +
                        "' produces " + std::to_string(sim->x_dim()));
    o.data.x = t.values.leftCols(cols);
    o.data.simulator = sim->name();
    o.data.flags.assign(static_cast<std::size_t>(t.values.rows()), 0);
  }
  if (o.data.x.cols() != sim->x_dim()) throw ManifestError("observed dataset has the wrong dimension");
  o.fingerprint = fingerprint(path);
  return o;
}

posterior::GaussianPrior prior_of(const ExperimentConfig& cfg) { return cfg.make_simulator()->prior(); }

/// Weight fit plus beta selection, written into dir. Returns (weight, beta).
std::pair<weights::ImqWeight, double> weight_and_beta(const ExperimentConfig& cfg, const surrogate::Surrogate& model,
                                                      const Mat& x, const fs::path& dir) {
  fs::create_directories(dir);
  auto w = weights::ImqWeight::fit(x, cfg.zeta, cfg.scatter, stage_seed(cfg.seed, "weight"));
  io::write_json(dir / "weight.json", w.to_json());
  const auto prior = prior_of(cfg);
  if (!cfg.calibrate) {
    calibrate::write_trace_csv(dir / "calibration_trace.csv", {});
    io::write_json(dir / "calibration.json", {{"enabled", false}, {"beta", cfg.beta}});
    return {w, cfg.beta};
  }
  auto cc = cfg.calibration;
  cc.seed = stage_seed(cfg.seed, "calibrate");
  calibrate::CalibResult r;
  try {
    if (const auto* ebm = dynamic_cast<const surrogate::ExpFamEbm*>(&model)) {
      r = calibrate::calibrate_conjugate(x, *ebm, w, prior, cc);
    } else {
      const calibrate::PointLossFn losses = [&](const Vec& th) { return loss::point_losses(x, model, w, th); };
      r = calibrate::calibrate_mcmc_is(losses, x.rows(), prior, cc);
    }
  } catch (const calibrate::CalibrationError& e) {
    calibrate::write_trace_csv(dir / "calibration_trace.csv", e.trace());  // keep the partial trace
    throw;
  }
  calibrate::write_trace_csv(dir / "calibration_trace.csv", r.trace);
  io::write_json(dir / "calibration.json", {{"enabled", true},
                                            {"beta", r.beta},
                                            {"final_coverage", r.final_coverage},
                                            {"theta_hat", io::to_json(r.theta_hat)},
                                            {"refreshes", r.refreshes},
                                            {"target_coverage", 1.0 - cc.alpha}});
  return {w, r.beta};
}

}  // namespace

void stage_simulate(const ExperimentConfig& cfg, const fs::path& out) {
  require_seed(cfg);
  const auto sim = cfg.make_simulator();
  const auto dir = out / "simulate";
  fs::create_directories(dir);
  const auto bank = sim::simulate_bank(*sim, cfg.simulations, stage_seed(cfg.seed, "simulate"));
  bank.save(dir);
  const auto obs = sim::observed_dataset(*sim, cfg.true_theta(), cfg.observed_n, cfg.contamination,
                                         stage_seed(cfg.seed, "observed"));
  obs.save(dir, "observed");
  auto man = base_manifest(Stage::simulate, cfg);
  man["simulations"] = cfg.simulations;
  man["observed"] = {{"n", cfg.observed_n}, {"contaminated", obs.contaminated_count()}};
  man["files"] = {{"bank.csv", ""}, {"bank.json", ""}, {"observed.csv", ""}, {"observed.json", ""}};
  write_manifest(dir, man);
}

void stage_train(const ExperimentConfig& cfg, const fs::path& out) {
  require_seed(cfg);
  const std::string who = "train";
  const auto sdir = out / "simulate";
  const auto sman = read_manifest(sdir, who);
  check_simulator(sman, cfg, who);
  verify_files(sdir, sman, who);
  const auto bank = sim::Bank::load(sdir);

  const auto seed = stage_seed(cfg.seed, "train");
  auto rng = make_rng(seed, label_id("init"));
  auto model = make_model(cfg, bank.x.cols(), bank.theta.cols(), rng);
  auto tc = cfg.training;
  tc.seed = seed;
  train::TrainReport report;
  if (auto* ebm = dynamic_cast<surrogate::ExpFamEbm*>(model.get()))
    report = train::fit_score_matching(*ebm, bank.theta, bank.x, tc);
  else
    report = train::fit_nle(*model, bank.theta, bank.x, tc);

  const auto dir = out / "train";
  fs::create_directories(dir);
  for (const auto& n : model_files(dir)) fs::remove(dir / n);  // our own previous model only
  model->save(dir, "model");
  io::write_json(dir / "train_report.json", report.to_json());
  auto man = base_manifest(Stage::train, cfg);
  man["family"] = cfg.surrogate_family();
  man["bank_fingerprint"] = sman.at("files").at("bank.csv");
  for (const auto& n : model_files(dir)) man["files"][n] = "";
  man["files"]["train_report.json"] = "";
  write_manifest(dir, man);
}

void stage_calibrate(const ExperimentConfig& cfg, const fs::path& out) {
  require_seed(cfg);
  const std::string who = "calibrate";
  const auto lm = load_model(cfg, out, who);
  const auto obs = load_default_observed(cfg, out, who);
  const auto dir = out / "calibrate";
  fs::create_directories(dir);
  auto man = base_manifest(Stage::calibrate, cfg);
  man["model_fingerprint"] = lm.fingerprint;
  man["observed_fingerprint"] = obs.fingerprint;
  if (cfg.method == Method::nle) {
    // The plain likelihood posterior has no learning rate to tune.
    io::write_json(dir / "calibration.json", {{"enabled", false}, {"beta", 1.0}, {"note", "nle: not calibrated"}});
    calibrate::write_trace_csv(dir / "calibration_trace.csv", {});
    man["files"] = {{"calibration.json", ""}, {"calibration_trace.csv", ""}};
  } else {
    weight_and_beta(cfg, *lm.model, obs.data.x, dir);
    man["files"] = {{"weight.json", ""}, {"calibration.json", ""}, {"calibration_trace.csv", ""}};
  }
  write_manifest(dir, man);
}

void stage_infer(const ExperimentConfig& cfg, const fs::path& out, const StageOptions& opt) {
  require_seed(cfg);
  const std::string who = "infer";
  const auto lm = load_model(cfg, out, who);
  const auto& model = *lm.model;
  const auto dir = stage_dir(out, Stage::infer, opt);
  fs::create_directories(dir);

  Observed obs;
  std::optional<weights::ImqWeight> w;
  double beta = 1.0;
  if (opt.observed) {
    // Fresh data: weight and beta are refitted here; neither needs the simulator.
    obs = load_external_observed(cfg, *opt.observed);
    if (cfg.method != Method::nle) {
      auto [wt, b] = weight_and_beta(cfg, model, obs.data.x, dir);
      w = wt;
      beta = b;
    }
  } else {
    obs = load_default_observed(cfg, out, who);
    const auto cdir = out / "calibrate";
    const auto cman = read_manifest(cdir, who);
    verify_files(cdir, cman, who);
    if (cman.at("model_fingerprint") != lm.fingerprint || cman.at("observed_fingerprint") != obs.fingerprint)
      throw ManifestError("infer: calibration was run against a different model or dataset (stale); rerun calibrate");
    if (cman.at("method") != to_string(cfg.method))
      throw ManifestError("infer: calibration was run for method '" + cman.at("method").get<std::string>() + "'");
    beta = io::read_json(cdir / "calibration.json").at("beta").get<double>();
    if (cfg.method != Method::nle) w = weights::ImqWeight::from_json(io::read_json(cdir / "weight.json"));
  }
  if (obs.data.x.cols() != model.x_dim()) throw ManifestError("infer: observed data and model dimensions differ");

  const auto sim = cfg.make_simulator();
  const auto prior = sim->prior();
  auto rng = make_rng(stage_seed(cfg.seed, "infer"), 0);
  const auto slice = posterior::default_slice_config(prior, cfg.warmup);
  posterior::GaussianPosterior post;
  Mat draws;
  switch (cfg.method) {
    case Method::nsm_conj: {
      const auto& ebm = dynamic_cast<const surrogate::ExpFamEbm&>(model);
      const loss::ConjCache cache(obs.data.x, ebm, *w);
      post = posterior::nsm_conj_posterior(prior, cache.coefficients(), beta);
      draws = posterior::GaussianPrior(post.mean, post.cov).sample(cfg.draws, rng);
      break;
    }
    case Method::nsm:
      draws = posterior::nsm_sample(prior, obs.data.x, model, *w, beta, cfg.draws, slice, rng);
      post = posterior::GaussianPosterior::from_samples(draws);
      post.beta = beta;
      post.provenance = {{"method", "nsm"}, {"n", obs.data.x.rows()}, {"summary", "sample moments"}};
      break;
    case Method::nle:
      draws = posterior::nle_sample(prior, obs.data.x, model, cfg.draws, slice, rng);
      post = posterior::GaussianPosterior::from_samples(draws);
      post.provenance = {{"method", "nle"}, {"n", obs.data.x.rows()}, {"summary", "sample moments"}};
      break;
  }
  io::write_json(dir / "posterior.json", post.to_json());
  io::write_csv(dir / "posterior_samples.csv", sim->theta_names(), draws);

  auto man = base_manifest(Stage::infer, cfg);
  man["model_fingerprint"] = lm.fingerprint;
  man["observed_fingerprint"] = obs.fingerprint;
  man["observed"] = opt.observed ? opt.observed->string() : std::string("simulate/observed.csv");
  man["beta"] = beta;
  man["theta_true"] = obs.theta_known ? io::to_json(obs.data.theta) : json(nullptr);
  man["files"] = {{"posterior.json", ""}, {"posterior_samples.csv", ""}};
  write_manifest(dir, man);
}

void stage_metrics(const ExperimentConfig& cfg, const fs::path& out, const StageOptions& opt) {
  require_seed(cfg);
  const std::string who = "metrics";
  const auto idir = stage_dir(out, Stage::infer, opt);
  const auto iman = read_manifest(idir, who);
  check_simulator(iman, cfg, who);
  verify_files(idir, iman, who);
  if (iman.at("method") != to_string(cfg.method))
    throw ManifestError("metrics: posterior was produced by method '" + iman.at("method").get<std::string>() + "'");

  const auto post = posterior::GaussianPosterior::from_json(io::read_json(idir / "posterior.json"));
  const Mat draws = io::read_csv(idir / "posterior_samples.csv").values;
  const bool known = !iman.at("theta_true").is_null();
  const Vec truth = known ? io::vec_from_json(iman.at("theta_true")) : cfg.true_theta();
  const double alpha = cfg.calibration.alpha;
  const bool closed_form = cfg.method == Method::nsm_conj;

  json m;
  m["method"] = to_string(cfg.method);
  m["theta_true"] = io::to_json(truth);
  m["theta_true_from"] = known ? "dataset" : "config";
  m["beta"] = iman.at("beta");
  std::vector<std::string> header;
  std::vector<double> row;
  for (const auto& name : cfg.metrics) {
    double v = 0.0;
    if (name == "mse") {
      v = closed_form ? metrics::mse_conjugate(post, truth) : metrics::mse_samples(draws, truth);
    } else if (name == "coverage") {
      v = closed_form ? metrics::empirical_coverage(std::vector{post}, truth, alpha)
                      : metrics::empirical_coverage(std::vector{draws}, truth, alpha);
    } else {  // mmd
      if (!cfg.reference_samples) throw ConfigError("metrics: mmd needs metrics.reference_samples");
      const Mat ref = io::read_csv(*cfg.reference_samples).values;
      if (ref.cols() != draws.cols()) throw ConfigError("metrics: reference samples have the wrong dimension");
      v = metrics::mmd2(draws, ref);
    }
    m[name] = v;
    header.push_back(name);
    row.push_back(v);
  }
  const auto dir = stage_dir(out, Stage::metrics, opt);
  fs::create_directories(dir);
  io::write_json(dir / "metrics.json", m);
  io::write_csv(dir / "metrics.csv", header, Eigen::Map<Mat>(row.data(), 1, static_cast<Index>(row.size())));
}

void run_stage(Stage stage, const ExperimentConfig& cfg, const fs::path& out, const StageOptions& opt) {
  require_seed(cfg);
  fs::create_directories(out);
  const long calls0 = sim::simulator_calls();
  const auto t0 = std::chrono::steady_clock::now();
  json entry{{"stage", to_string(stage)}, {"git_describe", git_describe()}, {"config", cfg.to_json()}};
  if (opt.observed) entry["observed"] = opt.observed->string();
  std::exception_ptr failure;
  try {
    switch (stage) {
      case Stage::simulate: stage_simulate(cfg, out); break;
      case Stage::train: stage_train(cfg, out); break;
      case Stage::calibrate: stage_calibrate(cfg, out); break;
      case Stage::infer: stage_infer(cfg, out, opt); break;
      case Stage::metrics: stage_metrics(cfg, out, opt); break;
    }
    entry["status"] = "ok";
  } catch (const std::exception& e) {
    entry["status"] = "failed";
    entry["error"] = e.what();
    failure = std::current_exception();
  }
  entry["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  entry["simulator_calls"] = sim::simulator_calls() - calls0;

  const auto path = out / "run_manifest.json";
  json run = fs::exists(path) ? io::read_json(path) : json{{"entries", json::array()}};
  run["entries"].push_back(entry);
  io::write_json(path, run);

  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const std::exception& e) {
      throw StageError(stage, exit_code_for(e), e.what());
    }
  }
}

void run_all(const ExperimentConfig& cfg, const fs::path& out, Stage from) {
  bool started = false;
  for (Stage s : all_stages()) {
    started = started || s == from;
    if (started) run_stage(s, cfg, out);
  }
}

}  // namespace nsm::experiment
