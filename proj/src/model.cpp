#include "infusenet/model.hpp"

#include <algorithm>
#include <cmath>

#include "infusenet/kernels.hpp"

namespace ifn {

using nn::DiffTensor;
using nn::Tape;
using nn::Tensor;

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::infuse: return "infuse";
    case FusionMode::late: return "late";
    case FusionMode::single_flow: return "single_flow";
    case FusionMode::single_mag: return "single_mag";
  }
  return "infuse";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "infuse") return FusionMode::infuse;
  if (s == "late") return FusionMode::late;
  if (s == "single_flow") return FusionMode::single_flow;
  if (s == "single_mag") return FusionMode::single_mag;
  throw Error(Errc::validation, "unknown fusion mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (backbone.blocks < 1) throw Error(Errc::validation, "model.blocks must be >= 1");
  if (static_cast<int>(backbone.widths.size()) != backbone.blocks) {
    throw Error(Errc::validation, "model.widths must list one width per block");
  }
  for (int w : backbone.widths) {
    if (w < 1) throw Error(Errc::validation, "model.widths must be positive");
  }
  if (backbone.kernel < 1 || backbone.kernel % 2 == 0 || backbone.kernel > 7) {
    throw Error(Errc::validation, "model.kernel must be odd and at most 7");
  }
  if (flow_channels < 1 || mag_channels < 1 || num_classes < 1) {
    throw Error(Errc::validation, "channel and class counts must be positive");
  }
}

namespace {

Backbone make_backbone(const BackboneConfig& cfg, int in_channels, Rng& rng) {
  Backbone b;
  int in = in_channels;
  for (int w : cfg.widths) {
    b.blocks.push_back(nn::make_conv2d(in, w, cfg.kernel, rng));
    in = w;
  }
  return b;
}

void append(nn::ParamList& out, const std::string& prefix, const Backbone& b) {
  for (std::size_t i = 0; i < b.blocks.size(); ++i) {
    out.emplace_back(prefix + ".block" + std::to_string(i) + ".weight", b.blocks[i].weight);
    out.emplace_back(prefix + ".block" + std::to_string(i) + ".bias", b.blocks[i].bias);
  }
}

DiffTensor run_block(Tape& tape, const DiffTensor& x, const nn::Conv2d& conv) {
  return nn::relu_pool(tape, nn::conv2d(tape, x, conv));
}

void require_stream(const Backbone& b, const char* name) {
  if (b.blocks.empty()) throw Error(Errc::structure_mismatch, std::string("model has no ") + name + " stream");
}

void check_mask_range(const DiffTensor& mask) {
  for (double v : mask.value().data) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::validation, "attention mask value outside [0,1]");
  }
}

}  // namespace

InfuseNetParams make_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  InfuseNetParams p;
  p.config = cfg;
  Rng flow_rng(derive_seed(seed, 0xF10));
  Rng mag_rng(derive_seed(seed, 0x3A6));
  Rng head_rng(derive_seed(seed, 0x4EAD));
  const int last = cfg.backbone.widths.back();
  if (cfg.uses_flow()) p.flow = make_backbone(cfg.backbone, cfg.flow_channels, flow_rng);
  if (cfg.uses_mag()) p.mag = make_backbone(cfg.backbone, cfg.mag_channels, mag_rng);
  p.head = nn::make_linear(cfg.fusion == FusionMode::late ? 2 * last : last, cfg.num_classes, head_rng);
  if (cfg.aux_flow_head && cfg.uses_flow() && cfg.fusion != FusionMode::single_flow) {
    p.aux_flow_head = nn::make_linear(last, cfg.num_classes, head_rng);
  }
  return p;
}

nn::ParamList InfuseNetParams::named() const {
  nn::ParamList out = flow_params();
  for (auto& e : mag_params()) out.push_back(std::move(e));
  out.emplace_back("head.weight", head.weight);
  out.emplace_back("head.bias", head.bias);
  if (aux_flow_head) {
    out.emplace_back("aux_head.weight", aux_flow_head->weight);
    out.emplace_back("aux_head.bias", aux_flow_head->bias);
  }
  return out;
}

nn::ParamList InfuseNetParams::flow_params() const {
  nn::ParamList out;
  append(out, "flow", flow);
  return out;
}

nn::ParamList InfuseNetParams::mag_params() const {
  nn::ParamList out;
  append(out, "mag", mag);
  return out;
}

DiffTensor forward_infusenet(Tape& tape, const DiffTensor& flow_img, const DiffTensor& mag_in,
                             const InfuseNetParams& params, ForwardTrace* trace, MaskOverride override_masks) {
  require_stream(params.flow, "flow");
  require_stream(params.mag, "mag");
  if (flow_img.dims().size() != 4 || mag_in.dims().size() != 4 || flow_img.dims()[0] != mag_in.dims()[0] ||
      flow_img.dims()[2] != mag_in.dims()[2] || flow_img.dims()[3] != mag_in.dims()[3]) {
    throw Error(Errc::dimension_mismatch, "stream inputs must share batch and spatial dims: " +
                                              nn::shape_string(flow_img.dims()) + " vs " + nn::shape_string(mag_in.dims()));
  }
  DiffTensor of = flow_img, feat = mag_in;
  for (std::size_t n = 0; n < params.mag.blocks.size(); ++n) {
    of = run_block(tape, of, params.flow.blocks[n]);
    const DiffTensor f = run_block(tape, feat, params.mag.blocks[n]);
    if (of.dims() != f.dims()) {
      throw Error(Errc::structure_mismatch, "stream geometry diverges at block " + std::to_string(n) + ": " +
                                                nn::shape_string(of.dims()) + " vs " + nn::shape_string(f.dims()));
    }
    const DiffTensor mask = override_masks == MaskOverride::ones ? DiffTensor(Tensor(f.dims(), 1.0))
                                                                 : nn::minmax_normalize(tape, of);
    check_mask_range(mask);
    feat = nn::infuse(tape, f, mask);
    if (trace) {
      trace->flow_features.push_back(of);
      trace->mag_features.push_back(f);
      trace->masks.push_back(mask);
      trace->infused.push_back(feat);
    }
  }
  const DiffTensor pooled = nn::global_avg_pool(tape, feat);
  if (trace) trace->pooled_flow = nn::global_avg_pool(tape, of);
  return nn::linear(tape, pooled, params.head);
}

DiffTensor forward_single(Tape& tape, const DiffTensor& input, const InfuseNetParams& params, Stream which,
                          ForwardTrace* trace) {
  const Backbone& b = which == Stream::flow ? params.flow : params.mag;
  require_stream(b, which == Stream::flow ? "flow" : "mag");
  DiffTensor x = input;
  for (const auto& conv : b.blocks) {
    x = run_block(tape, x, conv);
    if (trace) (which == Stream::flow ? trace->flow_features : trace->mag_features).push_back(x);
  }
  const DiffTensor pooled = nn::global_avg_pool(tape, x);
  if (trace && which == Stream::flow) trace->pooled_flow = pooled;
  return nn::linear(tape, pooled, params.head);
}

DiffTensor late_fusion_forward(Tape& tape, const DiffTensor& flow_img, const DiffTensor& mag_in,
                               const InfuseNetParams& params, ForwardTrace* trace) {
  require_stream(params.flow, "flow");
  require_stream(params.mag, "mag");
  DiffTensor of = flow_img, mf = mag_in;
  for (const auto& conv : params.flow.blocks) {
    of = run_block(tape, of, conv);
    if (trace) trace->flow_features.push_back(of);
  }
  for (const auto& conv : params.mag.blocks) {
    mf = run_block(tape, mf, conv);
    if (trace) trace->mag_features.push_back(mf);
  }
  const DiffTensor pf = nn::global_avg_pool(tape, of);
  if (trace) trace->pooled_flow = pf;
  const DiffTensor joined = nn::concat_features(tape, pf, nn::global_avg_pool(tape, mf));
  return nn::linear(tape, joined, params.head);
}

DiffTensor forward(Tape& tape, const DiffTensor& flow_img, const DiffTensor& mag_in, const InfuseNetParams& params,
                   ForwardTrace* trace) {
  switch (params.config.fusion) {
    case FusionMode::infuse:
      if (!params.config.infusion) return forward_single(tape, mag_in, params, Stream::mag, trace);
      return forward_infusenet(tape, flow_img, mag_in, params, trace);
    case FusionMode::late: return late_fusion_forward(tape, flow_img, mag_in, params, trace);
    case FusionMode::single_flow: return forward_single(tape, flow_img, params, Stream::flow, trace);
    case FusionMode::single_mag: return forward_single(tape, mag_in, params, Stream::mag, trace);
  }
  throw Error(Errc::invalid_argument, "unhandled fusion mode");
}

SaliencyMap saliency_map(const DiffTensor& flow_img, const DiffTensor& mag_in, const InfuseNetParams& params,
                         int class_index) {
  if (class_index < 0 || class_index >= params.config.num_classes) {
    throw Error(Errc::invalid_argument, "saliency class index " + std::to_string(class_index) + " out of range");
  }
  const auto& in_dims = params.config.uses_mag() ? mag_in.dims() : flow_img.dims();
  if (in_dims.size() != 4 || in_dims[0] != 1) throw Error(Errc::dimension_mismatch, "saliency expects batch size 1");

  Tape tape;
  ForwardTrace trace;
  const DiffTensor logits = forward(tape, flow_img, mag_in, params, &trace);
  DiffTensor last;
  if (!trace.infused.empty()) {
    last = trace.infused.back();
  } else if (!trace.mag_features.empty()) {
    last = trace.mag_features.back();
  } else {
    last = trace.flow_features.back();
  }
  Tensor pick({1, params.config.num_classes});
  pick.data[static_cast<std::size_t>(class_index)] = 1.0;
  const DiffTensor score = nn::weighted_sum(tape, logits, pick);
  if (score.requires_grad()) tape.backward(score);

  const int c = last.dims()[1], h = last.dims()[2], w = last.dims()[3];
  const std::size_t area = static_cast<std::size_t>(h) * w;
  std::vector<double> coarse(area, 0.0);
  if (last.has_grad()) {
    const auto& g = last.grad().data;
    const auto& a = last.value().data;
    for (std::size_t k = 0; k < area; ++k) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) acc += g[ch * area + k] * a[ch * area + k];
      coarse[k] = std::max(0.0, acc / c);
    }
  }
  SaliencyMap map{in_dims[2], in_dims[3], std::vector<double>(static_cast<std::size_t>(in_dims[2]) * in_dims[3])};
  kernels::omp::resize_bilinear(coarse, h, w, map.data, map.height, map.width);
  const double peak = *std::max_element(map.data.begin(), map.data.end());
  for (auto& v : map.data) v = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) : 0.0;
  return map;
}

}  // namespace ifn
