#include "infusenet/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace ifn {

F1Report f1_per_class(std::span<const AuLabels> predictions, std::span<const AuLabels> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(Errc::dimension_mismatch, "prediction count " + std::to_string(predictions.size()) +
                                              " does not match label count " + std::to_string(labels.size()));
  }
  F1Report r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int k = 0; k < kNumAus; ++k) {
      const bool p = predictions[i][k] != 0, y = labels[i][k] != 0;
      auto& c = r.counts[k];
      if (p && y) ++c.tp;
      if (p && !y) ++c.fp;
      if (!p && y) ++c.fn;
      if (!p && !y) ++c.tn;
      if (y) ++r.support[k];
    }
  }
  for (int k = 0; k < kNumAus; ++k) {
    const auto& c = r.counts[k];
    const int denom = 2 * c.tp + c.fp + c.fn;
    r.per_au_f1[k] = denom == 0 ? 0.0 : 2.0 * c.tp / denom;
  }
  r.macro_f1 = macro_f1(r.per_au_f1);
  return r;
}

double macro_f1(std::span<const double> per_class) {
  if (per_class.size() != static_cast<std::size_t>(kNumAus)) {
    throw Error(Errc::invalid_argument, "macro_f1 needs " + std::to_string(kNumAus) + " values, got " +
                                            std::to_string(per_class.size()));
  }
  return std::accumulate(per_class.begin(), per_class.end(), 0.0) / kNumAus;
}

FoldPlan lodbo_folds(const Manifest& manifest) {
  std::map<std::string, std::vector<std::size_t>> by_db;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) by_db[manifest.samples[i].database_id].push_back(i);
  if (by_db.size() < 2) {
    throw Error(Errc::invalid_argument, "leave-one-database-out needs at least 2 databases, found " +
                                            std::to_string(by_db.size()));
  }
  FoldPlan plan;
  for (const auto& [db, members] : by_db) {
    Fold f{db, {}, members};
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
      if (manifest.samples[i].database_id != db) f.train.push_back(i);
    }
    plan.push_back(std::move(f));
  }
  return plan;
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold_index) { return derive_seed(seed, 0x1000 + fold_index); }

TrainConfig fold_train_config(const TrainConfig& base, std::uint64_t seed, std::size_t fold_index) {
  TrainConfig tc = base;
  tc.seed = derive_seed(fold_seed(seed, fold_index), base.seed);
  return tc;
}

F1Report evaluate_fold(const Dataset& data, const Fold& fold, const InfuseNetParams& params, LossKind loss) {
  const auto logits = predict_logits(data, fold.test, params);
  std::vector<AuLabels> preds, labels;
  for (std::size_t i = 0; i < fold.test.size(); ++i) {
    preds.push_back(threshold_logits(logits[i], loss));
    labels.push_back(data.samples[fold.test[i]].labels);
  }
  return f1_per_class(preds, labels);
}

double protocol_score(const std::vector<FoldResult>& folds) {
  if (folds.empty()) throw Error(Errc::invalid_argument, "no folds to average");
  double sum = 0.0;
  for (const auto& f : folds) sum += f.f1.macro_f1;
  return sum / static_cast<double>(folds.size());
}

ProtocolReport run_protocol(const Manifest& manifest, const ExperimentConfig& cfg, std::uint64_t seed,
                            const Dataset* data) {
  cfg.model.validate();
  cfg.train.validate();
  const FoldPlan plan = lodbo_folds(manifest);
  Dataset built;
  if (!data) {
    InputConfig in = cfg.inputs;
    in.max_offset = std::max(in.max_offset, cfg.train.max_offset);
    built = build_dataset(manifest, in);
    data = &built;
  }
  if (data->samples.size() != manifest.samples.size()) {
    throw Error(Errc::dimension_mismatch, "prepared dataset does not match the manifest");
  }

  ProtocolReport report;
  for (std::size_t f = 0; f < plan.size(); ++f) {
    const Fold& fold = plan[f];
    const TrainConfig tc = fold_train_config(cfg.train, seed, f);
    FoldResult result;
    result.held_out = fold.held_out;
    try {
      result.training = train_model(*data, fold.train, cfg.model, tc);
    } catch (const std::exception& e) {
      throw Error(Errc::training_failure, "fold '" + fold.held_out + "': " + e.what());
    }
    result.f1 = evaluate_fold(*data, fold, result.training.params, tc.loss);
    report.folds.push_back(std::move(result));
  }
  report.protocol_macro_f1 = protocol_score(report.folds);
  return report;
}

nlohmann::json ProtocolReport::to_json() const {
  nlohmann::json folds_json = nlohmann::json::array();
  for (const auto& f : folds) {
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& c : f.f1.counts) counts.push_back({{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}});
    folds_json.push_back({{"held_out", f.held_out},
                          {"per_au_f1", f.f1.per_au_f1},
                          {"macro_f1", f.f1.macro_f1},
                          {"support", f.f1.support},
                          {"counts", counts}});
  }
  return {{"folds", folds_json}, {"protocol_macro_f1", protocol_macro_f1}};
}

std::string validate_report(const nlohmann::json& report) {
  if (!report.is_object()) return "report is not an object";
  if (!report.contains("folds") || !report["folds"].is_array()) return "missing folds array";
  if (report["folds"].empty()) return "folds array is empty";
  if (!report.contains("protocol_macro_f1") || !report["protocol_macro_f1"].is_number()) {
    return "missing protocol_macro_f1";
  }
  const double score = report["protocol_macro_f1"].get<double>();
  if (score < 0.0 || score > 1.0) return "protocol_macro_f1 outside [0,1]";
  for (const auto& f : report["folds"]) {
    if (!f.contains("held_out") || !f["held_out"].is_string()) return "fold without held_out";
    if (!f.contains("macro_f1") || !f["macro_f1"].is_number()) return "fold without macro_f1";
    for (const char* key : {"per_au_f1", "support"}) {
      if (!f.contains(key) || !f[key].is_array() || f[key].size() != static_cast<std::size_t>(kNumAus)) {
        return std::string("fold ") + f["held_out"].get<std::string>() + ": " + key + " must have 12 entries";
      }
    }
    for (const auto& v : f["per_au_f1"]) {
      if (!v.is_number() || v.get<double>() < 0.0 || v.get<double>() > 1.0) return "per-AU F1 outside [0,1]";
    }
  }
  return {};
}

}  // namespace ifn
