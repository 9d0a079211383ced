#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "infusenet/eval.hpp"

namespace ifn {

struct MagnifySection {
  MagConfig mag;
  bool decoded = false;
  bool standardize = true;
};

struct EvalSection {
  std::vector<double> ablation_factors = {5, 10, 15, 20};
  std::vector<std::string> ablation_modes = {"infuse", "late", "single_flow", "single_mag", "infuse_decoded"};
  int batch = 16;
};

struct PathsSection {
  std::string out = "run";
};

struct RunConfig {
  CorpusConfig corpus;
  FlowParams flow;
  MagnifySection magnify;
  ModelConfig model;
  TrainConfig train;
  EvalSection eval;
  PathsSection paths;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Inputs, model and training settings for a protocol run.
  ExperimentConfig experiment() const;
};

/// Builds a config from JSON text. Omitted keys take their defaults; unknown
/// keys, type errors and invariant violations throw.
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig parse_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& j);

/// Writes the resolved config as config.json in `dir`.
void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace ifn
