#pragma once
// JSON run configuration shared by the CLI commands. Precedence is
// command-line flag > config file > built-in default; the CLI applies flags
// on top of a RunConfig loaded here.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ckd/diagnostics.hpp"
#include "ckd/synth.hpp"
#include "ckd/trainer.hpp"
#include "json.hpp"

namespace ckd {

struct FeatureSource {
  std::string modality;
  std::filesystem::path path;
};

struct RunConfig {
  std::filesystem::path dataset;        // directory written by `prepare` or `synth`
  std::vector<FeatureSource> features;  // modality order is significant
  std::filesystem::path out_dir = "out";
  std::map<std::string, std::filesystem::path> teachers;  // modality -> checkpoint
  TrainConfig train;
  std::vector<std::string> channels;  // empty: full + every modality
  bool log_causal = false;
  BridgeConfig bridge;

  // Missing keys keep their current values; unknown keys are rejected.
  void merge_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  // Teacher checkpoint for `modality`: explicit entry or <out_dir>/teacher_<modality>.ckpt.
  std::filesystem::path teacher_path(const std::string& modality) const;
};

RunConfig load_run_config(const std::filesystem::path& path);

void merge_synth_json(SynthConfig& config, const nlohmann::json& j);
nlohmann::json synth_to_json(const SynthConfig& config);
SynthConfig load_synth_config(const std::filesystem::path& path);

// Loads the dataset directory and every feature file named in the config.
struct LoadedData {
  InteractionData data;
  std::vector<ModalityFeatures> features;
};
LoadedData load_run_data(const RunConfig& config);

}  // namespace ckd
