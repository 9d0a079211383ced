#include "infusenet/pipeline.hpp"

#include <sys/resource.h>

#include <chrono>
#include <fstream>
#include <ostream>

namespace ifn {

namespace fs = std::filesystem;

nlohmann::json BenchRecord::to_json() const {
  return {{"stage", stage}, {"input_size", input_size}, {"wall_seconds", wall_seconds}, {"peak_rss_kb", peak_rss_kb}};
}

long peak_rss_kb() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
  return usage.ru_maxrss;
}

void append_bench_record(const fs::path& file, const BenchRecord& rec) {
  std::ofstream out(file, std::ios::app);
  if (!out) throw Error(Errc::unwritable_path, "cannot append to " + file.string());
  out << rec.to_json().dump() << '\n';
}

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(Errc::unwritable_path, "cannot create directory " + dir.string());
}

Manifest require_manifest(const RunPaths& paths) {
  if (!fs::exists(paths.manifest())) {
    throw Error(Errc::missing_prerequisite, "no corpus at " + paths.manifest().string() + "; run 'gen' first");
  }
  return Manifest::load(paths.manifest());
}

fs::path flow_file(const RunPaths& paths, const Sample& s) { return paths.flow() / (s.sample_id + ".ifnt"); }

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(Errc::unwritable_path, "cannot write " + file.string());
  out << text;
}

void write_json(const fs::path& file, const nlohmann::json& j) { write_text(file, j.dump(2) + "\n"); }

// Pseudo-apex used for the stage-level magnification artifacts of sample i.
int stage_pseudo_apex(const RunConfig& cfg, const Sample& s, std::size_t i) {
  Rng rng(derive_seed(cfg.seed, 0x3A9000 + i));
  return sample_pseudo_apex(s.apex_index, s.num_frames, cfg.train.max_offset, rng);
}

}  // namespace

std::size_t stage_gen(const RunConfig& cfg, const RunPaths& paths) {
  make_dir(paths.corpus());
  return gen_corpus(cfg.corpus, cfg.seed, paths.corpus()).samples.size();
}

std::size_t stage_flow(const RunConfig& cfg, const RunPaths& paths) {
  const Manifest m = require_manifest(paths);
  make_dir(paths.flow());
  const auto images = compute_flow_images(m, cfg.flow);
  for (std::size_t i = 0; i < images.size(); ++i) store_tensor(images[i].to_tensor(), flow_file(paths, m.samples[i]));
  return images.size();
}

std::size_t stage_magnify(const RunConfig& cfg, const RunPaths& paths) {
  const Manifest m = require_manifest(paths);
  make_dir(paths.magnify());
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    const Sample& s = m.samples[i];
    const Image onset = load_frame(m.resolve(s.onset_path));
    const Image apex = load_frame(m.resolve(s.apex_path));
    const Image pseudo = load_frame(m.frame_path(s, stage_pseudo_apex(cfg, s, i)));
    if (cfg.magnify.decoded) {
      const MagTensor pair = decoded_magnified_pair(onset, apex, pseudo, cfg.magnify.mag);
      const std::size_t area = static_cast<std::size_t>(pair.height) * pair.width;
      for (int c = 0; c < 2; ++c) {
        Image img{pair.height, pair.width,
                  std::vector<double>(pair.data.begin() + static_cast<std::ptrdiff_t>(c * area),
                                      pair.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * area))};
        store_frame(img, paths.magnify() / (s.sample_id + (c == 0 ? "_apex.pgm" : "_pseudo_apex.pgm")));
      }
    } else {
      store_tensor(magnified_latent_pair(onset, apex, pseudo, cfg.magnify.mag).to_tensor(),
                   paths.magnify() / (s.sample_id + ".ifnt"));
    }
  }
  return m.samples.size();
}

std::vector<OpticalFlowImage> load_flow_images(const Manifest& manifest, const RunPaths& paths) {
  std::vector<OpticalFlowImage> out;
  out.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) {
    const fs::path f = flow_file(paths, s);
    if (!fs::exists(f)) throw Error(Errc::missing_prerequisite, "missing " + f.string() + "; run 'flow' first");
    out.push_back(OpticalFlowImage::from_tensor(load_tensor(f)));
  }
  return out;
}

Dataset load_dataset(const RunConfig& cfg, const Manifest& manifest, const RunPaths& paths, const MagConfig& mag,
                     bool decoded) {
  const auto flows = load_flow_images(manifest, paths);
  InputConfig in = cfg.experiment().inputs;
  in.magnify = mag;
  in.decoded = decoded;
  return build_dataset(manifest, in, &flows);
}

InfuseNetParams load_fold_params(const RunConfig& cfg, const Dataset& data, const fs::path& dir) {
  ModelConfig mc = cfg.model;
  mc.flow_channels = data.flow_channels;
  mc.mag_channels = data.mag_channels;
  mc.aux_flow_head = cfg.train.aux_flow_head;
  InfuseNetParams params = make_params(mc, 0);
  nn::assign_checkpoint(params.named(), nn::load_checkpoint(dir));
  return params;
}

std::size_t stage_train(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Manifest m = require_manifest(paths);
  const Dataset data = load_dataset(cfg, m, paths, cfg.magnify.mag, cfg.magnify.decoded);
  const FoldPlan plan = lodbo_folds(m);
  make_dir(paths.train());
  for (std::size_t f = 0; f < plan.size(); ++f) {
    const Fold& fold = plan[f];
    const TrainConfig tc = fold_train_config(cfg.train, cfg.seed, f);
    TrainResult r;
    try {
      r = train_model(data, fold.train, cfg.model, tc);
    } catch (const std::exception& e) {
      throw Error(Errc::training_failure, "fold '" + fold.held_out + "': " + e.what());
    }
    const fs::path dir = paths.fold_dir(fold.held_out);
    nn::save_checkpoint(r.params.named(), dir);
    write_text(dir / "loss.csv", loss_curve_csv(r.curve));
    log << "fold " << fold.held_out << ": " << fold.train.size() << " training samples, final epoch loss "
        << r.epoch_mean_loss.back() << '\n';
  }
  return m.samples.size();
}

std::size_t stage_eval(const RunConfig& cfg, const RunPaths& paths) {
  const Manifest m = require_manifest(paths);
  const FoldPlan plan = lodbo_folds(m);
  for (const auto& fold : plan) {
    if (!fs::exists(paths.fold_dir(fold.held_out) / "index.json")) {
      throw Error(Errc::missing_prerequisite,
                  "no checkpoint for fold '" + fold.held_out + "' under " + paths.train().string() + "; run 'train' first");
    }
  }
  const Dataset data = load_dataset(cfg, m, paths, cfg.magnify.mag, cfg.magnify.decoded);
  ProtocolReport report;
  for (const auto& fold : plan) {
    FoldResult r;
    r.held_out = fold.held_out;
    r.f1 = evaluate_fold(data, fold, load_fold_params(cfg, data, paths.fold_dir(fold.held_out)), cfg.train.loss);
    report.folds.push_back(std::move(r));
  }
  report.protocol_macro_f1 = protocol_score(report.folds);
  const nlohmann::json j = report.to_json();
  if (const std::string problem = validate_report(j); !problem.empty()) {
    throw Error(Errc::validation, "report failed validation: " + problem);
  }
  make_dir(paths.eval_report().parent_path());
  write_json(paths.eval_report(), j);
  return m.samples.size();
}

std::size_t stage_ablate(const RunConfig& cfg, const RunPaths& paths, std::ostream& log) {
  const Manifest m = require_manifest(paths);
  const auto flows = load_flow_images(m, paths);
  make_dir(paths.ablate());
  ExperimentConfig base = cfg.experiment();

  std::string factors = "alpha,protocol_macro_f1\n";
  for (double alpha : cfg.eval.ablation_factors) {
    ExperimentConfig e = base;
    e.inputs.magnify.alpha = alpha;
    const Dataset data = build_dataset(m, e.inputs, &flows);
    const double score = run_protocol(m, e, cfg.seed, &data).protocol_macro_f1;
    log << "alpha " << alpha << ": " << score << '\n';
    factors += nlohmann::json(alpha).dump() + "," + nlohmann::json(score).dump() + "\n";
  }
  write_text(paths.ablate() / "factors.csv", factors);

  std::string modes = "mode,protocol_macro_f1\n";
  for (const auto& mode : cfg.eval.ablation_modes) {
    ExperimentConfig e = base;
    if (mode == "infuse_decoded") {
      e.model.fusion = FusionMode::infuse;
      e.inputs.decoded = true;
    } else if (mode == "infuse_no_infusion") {
      e.model.fusion = FusionMode::infuse;
      e.model.infusion = false;
    } else {
      e.model.fusion = fusion_mode_from_string(mode);
    }
    const Dataset data = build_dataset(m, e.inputs, &flows);
    const double score = run_protocol(m, e, cfg.seed, &data).protocol_macro_f1;
    log << "mode " << mode << ": " << score << '\n';
    modes += mode + "," + nlohmann::json(score).dump() + "\n";
  }
  write_text(paths.ablate() / "modes.csv", modes);
  return m.samples.size();
}

std::size_t stage_saliency(const RunConfig& cfg, const RunPaths& paths, int per_fold) {
  const Manifest m = require_manifest(paths);
  const FoldPlan plan = lodbo_folds(m);
  for (const auto& fold : plan) {
    if (!fs::exists(paths.fold_dir(fold.held_out) / "index.json")) {
      throw Error(Errc::missing_prerequisite, "no checkpoint for fold '" + fold.held_out + "'; run 'train' first");
    }
  }
  const Dataset data = load_dataset(cfg, m, paths, cfg.magnify.mag, cfg.magnify.decoded);
  make_dir(paths.saliency());
  std::size_t done = 0;
  for (const auto& fold : plan) {
    const InfuseNetParams params = load_fold_params(cfg, data, paths.fold_dir(fold.held_out));
    const std::size_t n = std::min(fold.test.size(), static_cast<std::size_t>(std::max(per_fold, 0)));
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t i = fold.test[t];
      const auto& s = data.samples[i];
      const nn::DiffTensor flow(nn::Tensor({1, data.flow_channels, data.height, data.width}, s.flow));
      const nn::DiffTensor mag(
          nn::Tensor({1, data.mag_channels, data.height, data.width}, data.mag_input(i, s.apex_index)));
      for (int k = 0; k < kNumAus; ++k) {
        if (!s.labels[k]) continue;
        const SaliencyMap map = saliency_map(flow, mag, params, k);
        store_frame(Image{map.height, map.width, map.data},
                    paths.saliency() / (m.samples[i].sample_id + "_au" + std::to_string(kAuNumbers[k]) + ".pgm"));
      }
      ++done;
    }
  }
  return done;
}

void dispatch(const std::string& command, const RunConfig& cfg, std::ostream& log, const DispatchOptions& opts) {
  const RunPaths paths{cfg.paths.out};
  make_dir(paths.root);
  write_resolved_config(cfg, paths.root);
  const auto start = std::chrono::steady_clock::now();
  std::size_t n = 0;
  if (command == "gen") {
    n = stage_gen(cfg, paths);
  } else if (command == "flow") {
    n = stage_flow(cfg, paths);
  } else if (command == "magnify") {
    n = stage_magnify(cfg, paths);
  } else if (command == "train") {
    n = stage_train(cfg, paths, log);
  } else if (command == "eval") {
    n = stage_eval(cfg, paths);
  } else if (command == "ablate") {
    n = stage_ablate(cfg, paths, log);
  } else if (command == "saliency") {
    n = stage_saliency(cfg, paths, opts.saliency_per_fold);
  } else {
    throw Error(Errc::invalid_argument, "unknown command '" + command + "'");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  append_bench_record(paths.bench(), {command, n, secs, peak_rss_kb()});
  log << command << ": " << n << " samples in " << secs << " s\n";
}

}  // namespace ifn
