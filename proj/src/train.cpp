#include "infusenet/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>

namespace ifn {

using nn::DiffTensor;
using nn::Tape;
using nn::Tensor;

std::string to_string(LossKind kind) { return kind == LossKind::bce ? "bce" : "softmax_ce"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "bce") return LossKind::bce;
  if (s == "softmax_ce") return LossKind::softmax_ce;
  throw Error(Errc::validation, "unknown loss '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(Errc::validation, "train.lr must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error(Errc::validation, "train.gamma must lie in (0, 1]");
  if (epochs < 1) throw Error(Errc::validation, "train.epochs must be >= 1");
  if (batch < 1) throw Error(Errc::validation, "train.batch must be >= 1");
  if (max_offset < 0) throw Error(Errc::validation, "train.max_offset must be >= 0");
}

OptimizerState make_optimizer_state(const nn::ParamList& params) {
  OptimizerState st;
  for (const auto& [name, p] : params) {
    st.m.emplace_back(p.dims());
    st.v.emplace_back(p.dims());
  }
  return st;
}

void adam_step(const nn::ParamList& params, OptimizerState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(Errc::dimension_mismatch, "optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i].second;
    if (state.m[i].dims != p.dims() || state.v[i].dims != p.dims()) {
      throw Error(Errc::dimension_mismatch, "optimizer moments for " + params[i].first + " have wrong dims");
    }
    if (p.has_grad()) nn::check_finite(p.grad(), params[i].first.c_str());
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    DiffTensor p = params[i].second;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    auto& w = p.mutable_value().data;
    const std::vector<double>* g = p.has_grad() ? &p.grad().data : nullptr;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g ? (*g)[k] : 0.0;
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

double lr_at_epoch(double base_lr, double gamma, int epoch) {
  if (epoch < 0) throw Error(Errc::invalid_argument, "epoch must be >= 0");
  return base_lr * std::pow(gamma, epoch);
}

int sample_pseudo_apex(int apex_index, int sequence_length, int max_offset, Rng& rng) {
  if (apex_index < 0 || apex_index >= sequence_length) {
    throw Error(Errc::invalid_argument, "apex index " + std::to_string(apex_index) + " outside a sequence of " +
                                            std::to_string(sequence_length) + " frames");
  }
  if (max_offset < 0) throw Error(Errc::invalid_argument, "max_offset must be >= 0");
  const int u = static_cast<int>(rng.uniform_int(0, max_offset));
  return std::min(apex_index + u, sequence_length - 1);
}

std::vector<double> Dataset::mag_input(std::size_t sample, int pseudo_apex) const {
  const auto& s = samples.at(sample);
  const int offset = std::clamp(pseudo_apex - s.apex_index, 0, max_offset);
  const auto& second = s.mag_pseudo_apex.at(static_cast<std::size_t>(offset));
  std::vector<double> out;
  out.reserve(s.mag_apex.size() + second.size());
  out.insert(out.end(), s.mag_apex.begin(), s.mag_apex.end());
  out.insert(out.end(), second.begin(), second.end());
  return out;
}

std::vector<OpticalFlowImage> compute_flow_images(const Manifest& manifest, const FlowParams& params) {
  const auto n = static_cast<std::ptrdiff_t>(manifest.samples.size());
  std::vector<OpticalFlowImage> out(manifest.samples.size());
  std::vector<std::exception_ptr> errors(out.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& s = manifest.samples[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] = optical_flow_image(load_frame(manifest.resolve(s.onset_path)),
                                                            load_frame(manifest.resolve(s.apex_path)), params);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

namespace {

std::vector<double> prepared_half(const LatentStack& onset, const Image& target, const InputConfig& cfg) {
  MagTensor t = magnified_half(onset, target, cfg.magnify, cfg.decoded);
  if (!cfg.standardize) return std::move(t.data);
  const std::size_t area = static_cast<std::size_t>(t.height) * t.width;
  for (int c = 0; c < t.channels; ++c) {
    const auto first = t.data.begin() + static_cast<std::ptrdiff_t>(c * area);
    const double mean = std::accumulate(first, first + static_cast<std::ptrdiff_t>(area), 0.0) / area;
    double var = 0.0;
    for (auto it = first; it != first + static_cast<std::ptrdiff_t>(area); ++it) var += (*it - mean) * (*it - mean);
    const double sd = std::sqrt(var / area);
    for (auto it = first; it != first + static_cast<std::ptrdiff_t>(area); ++it) *it = sd > 0.0 ? (*it - mean) / sd : 0.0;
  }
  return std::move(t.data);
}

}  // namespace

Dataset build_dataset(const Manifest& manifest, const InputConfig& cfg,
                      const std::vector<OpticalFlowImage>* flow_images) {
  validate(cfg.magnify);
  if (cfg.max_offset < 0) throw Error(Errc::validation, "max_offset must be >= 0");
  if (manifest.samples.empty()) throw Error(Errc::invalid_argument, "manifest has no samples");
  if (flow_images && flow_images->size() != manifest.samples.size()) {
    throw Error(Errc::dimension_mismatch, "flow image count does not match the manifest");
  }
  std::vector<OpticalFlowImage> computed;
  if (!flow_images) {
    computed = compute_flow_images(manifest, cfg.flow);
    flow_images = &computed;
  }

  Dataset data;
  data.max_offset = cfg.max_offset;
  data.samples.resize(manifest.samples.size());
  std::vector<std::exception_ptr> errors(manifest.samples.size());
  const auto n = static_cast<std::ptrdiff_t>(manifest.samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      const Sample& s = manifest.samples[idx];
      SampleInputs& in = data.samples[idx];
      in.labels = s.au_labels;
      in.apex_index = s.apex_index;
      in.num_frames = s.num_frames;
      in.flow = (*flow_images)[idx].data;
      const Image onset = load_frame(manifest.resolve(s.onset_path));
      const Image apex = load_frame(manifest.resolve(s.apex_path));
      validate_frame(onset);
      const LatentStack base = encode(onset, cfg.magnify.depth);
      in.mag_apex = prepared_half(base, apex, cfg);
      in.mag_pseudo_apex.push_back(in.mag_apex);
      for (int off = 1; off <= cfg.max_offset; ++off) {
        const int frame = std::min(s.apex_index + off, s.num_frames - 1);
        if (frame == s.apex_index) {
          in.mag_pseudo_apex.push_back(in.mag_apex);
          continue;
        }
        const Image target = load_frame(manifest.frame_path(s, frame));
        in.mag_pseudo_apex.push_back(prepared_half(base, target, cfg));
      }
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const auto& first = (*flow_images)[0];
  data.height = first.height;
  data.width = first.width;
  const std::size_t area = static_cast<std::size_t>(data.height) * data.width;
  data.mag_channels = static_cast<int>(2 * data.samples[0].mag_apex.size() / area);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& f = (*flow_images)[i];
    if (f.height != data.height || f.width != data.width || data.samples[i].mag_apex.size() * 2 !=
                                                                 area * static_cast<std::size_t>(data.mag_channels)) {
      throw Error(Errc::dimension_mismatch, "sample " + manifest.samples[i].sample_id + " has a different geometry");
    }
  }
  return data;
}

namespace {

struct Batch {
  DiffTensor flow;
  DiffTensor mag;
  Tensor labels;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, std::span<const int> pseudo_apex) {
  const int b = static_cast<int>(indices.size());
  const std::size_t area = static_cast<std::size_t>(data.height) * data.width;
  Tensor flow({b, data.flow_channels, data.height, data.width});
  Tensor mag({b, data.mag_channels, data.height, data.width});
  Tensor labels({b, kNumAus});
  for (int i = 0; i < b; ++i) {
    const auto& s = data.samples[indices[static_cast<std::size_t>(i)]];
    std::copy(s.flow.begin(), s.flow.end(), flow.data.begin() + static_cast<std::ptrdiff_t>(i * data.flow_channels * area));
    const auto m = data.mag_input(indices[static_cast<std::size_t>(i)], pseudo_apex[static_cast<std::size_t>(i)]);
    std::copy(m.begin(), m.end(), mag.data.begin() + static_cast<std::ptrdiff_t>(i * data.mag_channels * area));
    for (int k = 0; k < kNumAus; ++k) labels.data[static_cast<std::size_t>(i * kNumAus + k)] = s.labels[k];
  }
  return {DiffTensor(std::move(flow)), DiffTensor(std::move(mag)), std::move(labels)};
}

DiffTensor loss_of(Tape& tape, const DiffTensor& logits, const Tensor& labels, LossKind kind) {
  return kind == LossKind::bce ? nn::bce_multilabel_loss(tape, logits, labels)
                               : nn::softmax_ce_loss(tape, logits, labels);
}

}  // namespace

TrainResult train_model(const Dataset& data, std::span<const std::size_t> train_indices, const ModelConfig& model,
                        const TrainConfig& cfg) {
  cfg.validate();
  if (train_indices.empty()) throw Error(Errc::invalid_argument, "training split is empty");
  if (cfg.max_offset > data.max_offset) {
    throw Error(Errc::validation, "dataset was prepared for max_offset " + std::to_string(data.max_offset));
  }
  ModelConfig mc = model;
  mc.flow_channels = data.flow_channels;
  mc.mag_channels = data.mag_channels;
  mc.aux_flow_head = cfg.aux_flow_head;
  mc.num_classes = kNumAus;

  TrainResult result{make_params(mc, derive_seed(cfg.seed, 1)), {}, {}};
  const nn::ParamList params = result.params.named();
  OptimizerState opt = make_optimizer_state(params);
  Rng order_rng(derive_seed(cfg.seed, 2));
  Rng apex_rng(derive_seed(cfg.seed, 3));

  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg.lr, cfg.gamma, epoch);
    order_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch));
      const std::span<const std::size_t> idx(order.data() + start, count);
      std::vector<int> pseudo(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto& s = data.samples[idx[i]];
        pseudo[i] = sample_pseudo_apex(s.apex_index, s.num_frames, cfg.max_offset, apex_rng);
      }
      const Batch batch = make_batch(data, idx, pseudo);

      Tape tape;
      ForwardTrace trace;
      const bool want_aux = result.params.aux_flow_head.has_value();
      const DiffTensor logits = forward(tape, batch.flow, batch.mag, result.params, want_aux ? &trace : nullptr);
      DiffTensor loss = loss_of(tape, logits, batch.labels, cfg.loss);
      if (want_aux) {
        const DiffTensor aux = nn::linear(tape, trace.pooled_flow, *result.params.aux_flow_head);
        loss = nn::add(tape, loss, loss_of(tape, aux, batch.labels, cfg.loss));
      }
      const double value = loss.value().data[0];
      if (!std::isfinite(value)) throw Error(Errc::non_finite, "loss became non-finite at step " + std::to_string(step));
      for (const auto& [name, p] : params) p.zero_grad();
      tape.backward(loss);
      adam_step(params, opt, lr);

      result.curve.push_back({epoch, step, value});
      epoch_loss += value;
      ++epoch_steps;
      ++step;
    }
    result.epoch_mean_loss.push_back(epoch_loss / epoch_steps);
  }
  return result;
}

std::vector<std::vector<double>> predict_logits(const Dataset& data, std::span<const std::size_t> indices,
                                                const InfuseNetParams& params, int batch) {
  if (batch < 1) throw Error(Errc::invalid_argument, "batch must be >= 1");
  std::vector<std::vector<double>> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t count = std::min(indices.size() - start, static_cast<std::size_t>(batch));
    const std::span<const std::size_t> idx = indices.subspan(start, count);
    std::vector<int> apex(count);
    for (std::size_t i = 0; i < count; ++i) apex[i] = data.samples[idx[i]].apex_index;
    const Batch b = make_batch(data, idx, apex);
    Tape tape;
    const DiffTensor logits = forward(tape, b.flow, b.mag, params);
    const int k = logits.dims()[1];
    for (std::size_t i = 0; i < count; ++i) {
      const auto* row = logits.value().data.data() + i * static_cast<std::size_t>(k);
      out.emplace_back(row, row + k);
    }
  }
  return out;
}

AuLabels threshold_logits(std::span<const double> logits, LossKind loss) {
  if (logits.size() != static_cast<std::size_t>(kNumAus)) {
    throw Error(Errc::dimension_mismatch, "expected " + std::to_string(kNumAus) + " logits");
  }
  AuLabels out{};
  if (loss == LossKind::bce) {
    for (int k = 0; k < kNumAus; ++k) out[k] = nn::sigmoid(logits[k]) >= 0.5 ? 1 : 0;
    return out;
  }
  // Softmax probabilities relative to the top class: p_k / p_max = exp(z_k - z_max).
  const double top = *std::max_element(logits.begin(), logits.end());
  for (int k = 0; k < kNumAus; ++k) out[k] = std::exp(logits[k] - top) >= 0.5 ? 1 : 0;
  return out;
}

std::string loss_curve_csv(const std::vector<LossRecord>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,step,loss\n";
  for (const auto& r : curve) out << r.epoch << ',' << r.step << ',' << r.loss << '\n';
  return out.str();
}

}  // namespace ifn
