#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "infusenet/config.hpp"

namespace ifn {

/// Directory layout of one run.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path corpus() const { return root / "corpus"; }
  std::filesystem::path manifest() const { return corpus() / "manifest.json"; }
  std::filesystem::path flow() const { return root / "flow"; }
  std::filesystem::path magnify() const { return root / "magnify"; }
  std::filesystem::path train() const { return root / "train"; }
  std::filesystem::path fold_dir(const std::string& held_out) const { return train() / ("fold_" + held_out); }
  std::filesystem::path eval_report() const { return root / "eval" / "report.json"; }
  std::filesystem::path ablate() const { return root / "ablate"; }
  std::filesystem::path saliency() const { return root / "saliency"; }
  std::filesystem::path bench() const { return root / "bench.jsonl"; }
};

struct BenchRecord {
  std::string stage;
  std::size_t input_size = 0;  // samples processed
  double wall_seconds = 0.0;
  long peak_rss_kb = 0;

  nlohmann::json to_json() const;
};

/// Peak resident set size of this process so far, in KiB.
long peak_rss_kb();

void append_bench_record(const std::filesystem::path& file, const BenchRecord& rec);

inline const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> commands = {"gen", "flow", "magnify", "train", "eval", "ablate", "saliency"};
  return commands;
}

/// Stage implementations. Each reads its prerequisites from the run
/// directory, writes its artifacts there and returns the number of samples
/// it processed.
std::size_t stage_gen(const RunConfig& cfg, const RunPaths& paths);
std::size_t stage_flow(const RunConfig& cfg, const RunPaths& paths);
std::size_t stage_magnify(const RunConfig& cfg, const RunPaths& paths);
std::size_t stage_train(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
std::size_t stage_eval(const RunConfig& cfg, const RunPaths& paths);
std::size_t stage_ablate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log);
std::size_t stage_saliency(const RunConfig& cfg, const RunPaths& paths, int per_fold);

struct DispatchOptions {
  int saliency_per_fold = 2;
};

/// Runs one stage: echoes the resolved config into the run directory, runs
/// the stage and appends its BenchRecord. Throws ifn::Error on failure.
void dispatch(const std::string& command, const RunConfig& cfg, std::ostream& log, const DispatchOptions& opts = {});

/// Flow images saved by the flow stage, in manifest order.
std::vector<OpticalFlowImage> load_flow_images(const Manifest& manifest, const RunPaths& paths);

/// Dataset for a run built from the saved flow images.
Dataset load_dataset(const RunConfig& cfg, const Manifest& manifest, const RunPaths& paths, const MagConfig& mag,
                     bool decoded);

/// Params for `data` restored from a fold checkpoint directory.
InfuseNetParams load_fold_params(const RunConfig& cfg, const Dataset& data, const std::filesystem::path& dir);

}  // namespace ifn
