#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "infusenet/train.hpp"

namespace ifn {

struct ClassCounts {
  int tp = 0, fp = 0, fn = 0, tn = 0;
};

struct F1Report {
  std::array<double, kNumAus> per_au_f1{};
  double macro_f1 = 0.0;
  std::array<int, kNumAus> support{};
  std::array<ClassCounts, kNumAus> counts{};
};

/// Per-class 2TP / (2TP + FP + FN); a class with no TP, FP or FN scores 0.
F1Report f1_per_class(std::span<const AuLabels> predictions, std::span<const AuLabels> labels);

/// Unweighted mean of exactly 12 values.
double macro_f1(std::span<const double> per_class);

struct Fold {
  std::string held_out;
  std::vector<std::size_t> train;  // manifest indices
  std::vector<std::size_t> test;
};

using FoldPlan = std::vector<Fold>;

/// One fold per database id, ordered by id.
FoldPlan lodbo_folds(const Manifest& manifest);

/// Everything a protocol run depends on besides the corpus.
struct ExperimentConfig {
  InputConfig inputs;
  ModelConfig model;
  TrainConfig train;
};

struct FoldResult {
  std::string held_out;
  F1Report f1;
  TrainResult training;
};

struct ProtocolReport {
  std::vector<FoldResult> folds;
  double protocol_macro_f1 = 0.0;

  nlohmann::json to_json() const;
};

/// Trains from scratch on each fold's split (seed derived from `seed` and the
/// fold position), evaluates on the held-out database and averages the fold
/// Macro-F1 scores. `data` must be built from `manifest` with a compatible
/// input configuration; when null it is built here.
ProtocolReport run_protocol(const Manifest& manifest, const ExperimentConfig& cfg, std::uint64_t seed,
                            const Dataset* data = nullptr);

/// Seed of the training run for fold `fold_index`.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold_index);

/// Training settings of fold `fold_index` of a protocol run seeded with `seed`.
TrainConfig fold_train_config(const TrainConfig& base, std::uint64_t seed, std::size_t fold_index);

/// Scores trained params on the fold's held-out samples at their annotated apex.
F1Report evaluate_fold(const Dataset& data, const Fold& fold, const InfuseNetParams& params, LossKind loss);

/// Mean of the fold Macro-F1 scores, summed in fold order.
double protocol_score(const std::vector<FoldResult>& folds);

/// Checks the report layout: folds with held_out, 12 per-AU F1 in [0,1],
/// macro_f1 and 12 supports, plus protocol_macro_f1. Returns an empty string
/// when valid, otherwise the first problem found.
std::string validate_report(const nlohmann::json& report);

}  // namespace ifn
