#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "infusenet/flow.hpp"
#include "infusenet/magnify.hpp"
#include "infusenet/model.hpp"
#include "infusenet/synth.hpp"

namespace ifn {

enum class LossKind { bce, softmax_ce };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  double lr = 0.001;
  double gamma = 0.9;  // per-epoch decay
  int epochs = 50;
  int batch = 8;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::bce;
  int max_offset = 5;  // pseudo-apex offset range {0..max_offset}
  bool aux_flow_head = false;

  void validate() const;
};

/// Adam moments for one parameter list.
struct OptimizerState {
  std::vector<nn::Tensor> m;
  std::vector<nn::Tensor> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimizerState make_optimizer_state(const nn::ParamList& params);

/// One bias-corrected Adam update using each parameter's gradient buffer
/// (parameters without a gradient are treated as having a zero gradient).
/// Throws Errc::non_finite before touching any parameter if a gradient is NaN/inf.
void adam_step(const nn::ParamList& params, OptimizerState& state, double lr);

double lr_at_epoch(double base_lr, double gamma, int epoch);

/// apex_index + u with u uniform on {0..max_offset}, clamped to the last frame.
int sample_pseudo_apex(int apex_index, int sequence_length, int max_offset, Rng& rng);

/// Network inputs of one sample with every pseudo-apex candidate precomputed.
struct SampleInputs {
  AuLabels labels{};
  int apex_index = 0;
  int num_frames = 0;
  std::vector<double> flow;                           // (3, H, W)
  std::vector<double> mag_apex;                       // first half: Mag(onset, apex)
  std::vector<std::vector<double>> mag_pseudo_apex;   // second half per offset 0..max_offset
};

/// Prepared corpus: one entry per manifest sample, in manifest order.
struct Dataset {
  int height = 0;
  int width = 0;
  int flow_channels = 3;
  int mag_channels = 0;  // both halves together
  int max_offset = 0;
  std::vector<SampleInputs> samples;

  /// Full magnification-stream input for `pseudo_apex`.
  std::vector<double> mag_input(std::size_t sample, int pseudo_apex) const;
};

/// Input preparation options shared by every sample of a dataset.
struct InputConfig {
  FlowParams flow;
  MagConfig magnify;
  bool decoded = false;  // decoded magnified images instead of latent levels
  bool standardize = true;  // zero mean, unit variance per sample and magnification channel
  int max_offset = 5;
};

/// Loads frames and computes the flow image and magnification inputs of every sample.
/// `flow_images`, when given, supplies precomputed flow images in manifest order.
Dataset build_dataset(const Manifest& manifest, const InputConfig& cfg,
                      const std::vector<OpticalFlowImage>* flow_images = nullptr);

/// Flow images of every manifest sample, onset -> apex.
std::vector<OpticalFlowImage> compute_flow_images(const Manifest& manifest, const FlowParams& params);

struct LossRecord {
  int epoch = 0;
  int step = 0;  // global optimizer step
  double loss = 0.0;
};

struct TrainResult {
  InfuseNetParams params;
  std::vector<LossRecord> curve;
  std::vector<double> epoch_mean_loss;
};

/// Mini-batch training over `train_indices` of `data`. Each epoch shuffles
/// the split, draws a pseudo-apex per sample, and applies lr_at_epoch.
TrainResult train_model(const Dataset& data, std::span<const std::size_t> train_indices, const ModelConfig& model,
                        const TrainConfig& cfg);

/// Logits for the given samples at their annotated apex, shape (count, classes).
std::vector<std::vector<double>> predict_logits(const Dataset& data, std::span<const std::size_t> indices,
                                                const InfuseNetParams& params, int batch = 16);

/// Multi-hot prediction from logits: sigmoid >= 0.5 for BCE models; for
/// softmax models every class whose probability is at least half the top one.
AuLabels threshold_logits(std::span<const double> logits, LossKind loss);

/// CSV text "epoch,step,loss" plus one line per record.
std::string loss_curve_csv(const std::vector<LossRecord>& curve);

}  // namespace ifn
