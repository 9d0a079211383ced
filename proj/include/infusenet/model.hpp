#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "infusenet/autonet.hpp"

namespace ifn {

/// How the two streams are combined.
enum class FusionMode {
  infuse,       // FrameFlow masks multiplied into FrameMag after every block
  late,         // independent streams, pooled features concatenated before the head
  single_flow,  // FrameFlow alone
  single_mag,   // FrameMag alone
};

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& s);

struct BackboneConfig {
  int blocks = 3;
  std::vector<int> widths = {16, 32, 64};
  int kernel = 3;
};

struct ModelConfig {
  BackboneConfig backbone;
  FusionMode fusion = FusionMode::infuse;
  /// With fusion == infuse, false skips the Hadamard step (FrameMag-only baseline).
  bool infusion = true;
  int flow_channels = 3;
  int mag_channels = 8;
  int num_classes = 12;
  bool aux_flow_head = false;

  void validate() const;
  bool uses_flow() const { return fusion != FusionMode::single_mag; }
  bool uses_mag() const { return fusion != FusionMode::single_flow; }
};

/// Stack of conv -> ReLU -> 2x2 max-pool blocks.
struct Backbone {
  std::vector<nn::Conv2d> blocks;
};

/// Parameters of one model. FrameFlow and FrameMag never share tensors.
struct InfuseNetParams {
  ModelConfig config;
  Backbone flow;  // empty when the mode does not use it
  Backbone mag;
  nn::Linear head;
  std::optional<nn::Linear> aux_flow_head;

  /// Stable parameter names: flow.block<i>.{weight,bias}, mag.block<i>..., head..., aux_head...
  nn::ParamList named() const;
  nn::ParamList flow_params() const;
  nn::ParamList mag_params() const;
};

InfuseNetParams make_params(const ModelConfig& cfg, std::uint64_t seed);

enum class MaskOverride { none, ones };

/// Intermediate maps of one forward pass, in block order.
struct ForwardTrace {
  std::vector<nn::DiffTensor> flow_features;
  std::vector<nn::DiffTensor> mag_features;
  std::vector<nn::DiffTensor> masks;
  std::vector<nn::DiffTensor> infused;
  nn::DiffTensor pooled_flow;  // set when the flow stream ran
};

/// Both streams with successive infusion: per block, F_of = FlowBlock(prev_of),
/// F_feat = MagBlock(prev_mag), A = minmax(F_of), prev_mag = F_feat * A.
/// Global average pool and linear head on the last infused map.
nn::DiffTensor forward_infusenet(nn::Tape& tape, const nn::DiffTensor& flow_img, const nn::DiffTensor& mag_in,
                                 const InfuseNetParams& params, ForwardTrace* trace = nullptr,
                                 MaskOverride override_masks = MaskOverride::none);

enum class Stream { flow, mag };

/// One backbone, pool, head.
nn::DiffTensor forward_single(nn::Tape& tape, const nn::DiffTensor& input, const InfuseNetParams& params, Stream which,
                              ForwardTrace* trace = nullptr);

/// Independent backbones; pooled features concatenated (flow first) into one head.
nn::DiffTensor late_fusion_forward(nn::Tape& tape, const nn::DiffTensor& flow_img, const nn::DiffTensor& mag_in,
                                   const InfuseNetParams& params, ForwardTrace* trace = nullptr);

/// Dispatches on params.config.fusion / infusion.
nn::DiffTensor forward(nn::Tape& tape, const nn::DiffTensor& flow_img, const nn::DiffTensor& mag_in,
                       const InfuseNetParams& params, ForwardTrace* trace = nullptr);

struct SaliencyMap {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // values in [0,1]
};

/// Gradient x activation map for one class on the last fused feature map:
/// mean over channels of (d logit / d F) * F, rectified, bilinearly resized
/// to the input grid and divided by its maximum (an all-zero map stays zero).
/// Inputs are single samples (batch 1).
SaliencyMap saliency_map(const nn::DiffTensor& flow_img, const nn::DiffTensor& mag_in, const InfuseNetParams& params,
                         int class_index);

}  // namespace ifn
