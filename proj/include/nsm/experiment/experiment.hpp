#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsm/experiment/config.hpp"

namespace nsm::experiment {

// Run directory layout: out/{simulate,train,calibrate,infer,metrics}/ plus out/run_manifest.json.
// Stages only write inside their own directory; each directory carries a manifest.json that
// later stages check against (simulator, model family, file fingerprints).

enum class Stage { simulate, train, calibrate, infer, metrics };
Stage parse_stage(const std::string& s);
std::string to_string(Stage s);
const std::vector<Stage>& all_stages();

/// A stage failed; exit_code follows the CLI mapping of the underlying error.
class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, int exit_code, const std::string& what)
      : std::runtime_error(what), stage_(stage), code_(exit_code) {}
  Stage stage() const { return stage_; }
  int exit_code() const { return code_; }

 private:
  Stage stage_;
  int code_;
};

/// 2 config, 3 numeric, 4 manifest, 1 anything else.
int exit_code_for(const std::exception& e);

std::string git_describe();
/// FNV-1a over the file bytes, as 16 hex digits.
std::string fingerprint(const std::filesystem::path& file);
std::uint64_t stage_seed(std::uint64_t master, const std::string& stage);

struct StageOptions {
  /// External observed dataset (csv, with an optional sibling .json). Infer and metrics
  /// then work in infer_<stem>/ and metrics_<stem>/ so the default outputs stay untouched.
  std::optional<std::filesystem::path> observed;
};

void stage_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out);
void stage_train(const ExperimentConfig& cfg, const std::filesystem::path& out);
void stage_calibrate(const ExperimentConfig& cfg, const std::filesystem::path& out);
void stage_infer(const ExperimentConfig& cfg, const std::filesystem::path& out, const StageOptions& opt = {});
void stage_metrics(const ExperimentConfig& cfg, const std::filesystem::path& out, const StageOptions& opt = {});

/// Times one stage, appends its entry to out/run_manifest.json and rethrows failures as StageError.
void run_stage(Stage stage, const ExperimentConfig& cfg, const std::filesystem::path& out,
               const StageOptions& opt = {});
/// Every stage from `from` onwards.
void run_all(const ExperimentConfig& cfg, const std::filesystem::path& out, Stage from = Stage::simulate);

/// Directory names used for a stage, honouring an external observed dataset.
std::filesystem::path stage_dir(const std::filesystem::path& out, Stage stage, const StageOptions& opt = {});

}  // namespace nsm::experiment
