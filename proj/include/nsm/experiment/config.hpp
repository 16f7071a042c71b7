#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsm/calibrate/calibrate.hpp"
#include "nsm/simulators/simulators.hpp"
#include "nsm/surrogate/ebm.hpp"
#include "nsm/surrogate/maf.hpp"
#include "nsm/surrogate/mdn.hpp"
#include "nsm/train/train.hpp"
#include "nsm/weights/robust.hpp"

namespace nsm::experiment {

enum class Method { nle, nsm, nsm_conj };
Method parse_method(const std::string& s);
std::string to_string(Method m);

struct ExperimentConfig {
  std::uint64_t seed = 0;
  bool seed_set = false;

  std::string simulator = "gandk";
  sim::SirConstants sir;
  sim::TurinConstants turin;

  Index simulations = 20000;

  Index observed_n = 100;
  std::optional<Vec> theta_star;  // defaults to the simulator's
  sim::ContaminationSpec contamination;

  Method method = Method::nsm_conj;
  std::string family;  // empty: ebm for nsm-conj, mdn for turin, maf otherwise
  std::vector<Index> hidden;  // empty: family default
  Index components = 10;
  Index transforms = 5;
  double variance_floor = 1e-4;
  bool standardise_theta = false;

  train::TrainConfig training;

  double zeta = 1.0;
  weights::ScatterMethod scatter = weights::ScatterMethod::automatic;

  bool calibrate = true;
  calibrate::CalibConfig calibration;
  double beta = 1.0;  // used when calibration is disabled

  Index draws = 500;
  int warmup = 500;

  std::vector<std::string> metrics{"mse", "coverage"};
  std::optional<std::filesystem::path> reference_samples;  // for mmd

  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig parse(const std::string& yaml_text);
  void validate() const;
  nlohmann::json to_json() const;

  std::unique_ptr<sim::Simulator> make_simulator() const;
  std::string surrogate_family() const;
  Vec true_theta() const;
};

}  // namespace nsm::experiment
