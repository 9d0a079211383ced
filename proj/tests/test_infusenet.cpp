#include <algorithm>
#include <cmath>

#include "infusenet/model.hpp"
#include "test_util.hpp"

using namespace ifn;
using nn::DiffTensor;
using nn::Tape;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<int> dims, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(dims));
  Rng rng(seed);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

ModelConfig small_model(FusionMode mode = FusionMode::infuse) {
  ModelConfig cfg;
  cfg.backbone.blocks = 2;
  cfg.backbone.widths = {4, 6};
  cfg.fusion = mode;
  return cfg;
}

// Randomises bias vectors; with `keep_flow` the FrameFlow biases stay at their zero init.
void randomise_biases(const InfuseNetParams& p, std::uint64_t seed, bool keep_flow = false) {
  Rng rng(seed);
  for (const auto& [name, t] : p.named()) {
    if (keep_flow && name.starts_with("flow.")) continue;
    if (name.ends_with(".bias")) {
      for (auto& v : const_cast<DiffTensor&>(t).mutable_value().data) v = rng.uniform(-0.5, 0.5);
    }
  }
}

}  // namespace

TEST_CASE("masks stay in [0,1] and geometry matches at every block") {
  const ModelConfig cfg = small_model();
  for (std::uint64_t i = 0; i < 100; ++i) {
    const InfuseNetParams p = make_params(cfg, i);
    Tape tape;
    ForwardTrace trace;
    forward_infusenet(tape, DiffTensor(random_tensor({2, 3, 16, 16}, 1000 + i)),
                      DiffTensor(random_tensor({2, 8, 16, 16}, 2000 + i)), p, &trace);
    REQUIRE(trace.masks.size() == 2);
    for (std::size_t n = 0; n < trace.masks.size(); ++n) {
      CHECK(trace.flow_features[n].dims() == trace.mag_features[n].dims());
      for (double v : trace.masks[n].value().data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("all-ones masks reproduce the FrameMag-only forward bit-exactly") {
  const InfuseNetParams p = make_params(small_model(), 4);
  randomise_biases(p, 9);
  const DiffTensor flow(random_tensor({3, 3, 16, 16}, 5)), mag(random_tensor({3, 8, 16, 16}, 6));
  Tape t1, t2;
  const Tensor a = forward_infusenet(t1, flow, mag, p, nullptr, MaskOverride::ones).value();
  const Tensor b = forward_single(t2, mag, p, Stream::mag).value();
  CHECK(a == b);

  ModelConfig off = small_model();
  off.infusion = false;
  InfuseNetParams q = p;
  q.config = off;
  Tape t3;
  CHECK(forward(t3, flow, mag, q).value() == b);
}

TEST_CASE("zero flow input yields the head bias") {
  // Zero padding turns a constant map with nonzero bias into a non-constant
  // one at the next block, so the contract holds under the zero bias init.
  const InfuseNetParams p = make_params(small_model(), 7);
  randomise_biases(p, 10, true);
  const DiffTensor flow(Tensor({2, 3, 16, 16})), mag(random_tensor({2, 8, 16, 16}, 8));
  Tape tape;
  ForwardTrace trace;
  const Tensor logits = forward_infusenet(tape, flow, mag, p, &trace).value();
  for (const auto& m : trace.masks)
    for (double v : m.value().data) CHECK(v == 0.0);
  const auto& bias = p.head.bias.value().data;
  for (int n = 0; n < 2; ++n)
    for (int k = 0; k < 12; ++k) CHECK(logits.data[static_cast<std::size_t>(n * 12 + k)] == bias[static_cast<std::size_t>(k)]);
}

TEST_CASE("zero input through single and late streams gives the head bias") {
  ModelConfig single = small_model(FusionMode::single_flow);
  const InfuseNetParams p = make_params(single, 3);
  Tape tape;
  // Zero biases (the default init) keep every activation at zero.
  const Tensor a = forward_single(tape, DiffTensor(Tensor({1, 3, 16, 16})), p, Stream::flow).value();
  CHECK(a.data == p.head.bias.value().data);

  const InfuseNetParams late = make_params(small_model(FusionMode::late), 3);
  for (auto& v : const_cast<DiffTensor&>(late.head.bias).mutable_value().data) v = 0.25;
  const Tensor b = late_fusion_forward(tape, DiffTensor(Tensor({1, 3, 16, 16})), DiffTensor(Tensor({1, 8, 16, 16})), late).value();
  CHECK(b.data == std::vector<double>(12, 0.25));
  CHECK(late.head.in_features == 6 + 6);
}

TEST_CASE("zero-motion suppression") {
  const InfuseNetParams p = make_params(small_model(), 12);
  Tensor flow = random_tensor({1, 3, 16, 16}, 13);
  // Blank the right half so some FrameFlow activations are exactly zero.
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 8; x < 16; ++x) flow.data[static_cast<std::size_t>((c * 16 + y) * 16 + x)] = 0.0;
  Tape tape;
  ForwardTrace trace;
  forward_infusenet(tape, DiffTensor(flow), DiffTensor(random_tensor({1, 8, 16, 16}, 14)), p, &trace);
  int checked = 0;
  for (std::size_t n = 0; n < trace.masks.size(); ++n) {
    const auto& f = trace.flow_features[n].value();
    const int c = f.dim(1), area = f.dim(2) * f.dim(3);
    for (int ch = 0; ch < c; ++ch) {
      const auto first = f.data.begin() + ch * area;
      if (*std::min_element(first, first + area) != 0.0) continue;
      for (int k = 0; k < area; ++k) {
        if (f.data[static_cast<std::size_t>(ch * area + k)] != 0.0) continue;
        CHECK(trace.infused[n].value().data[static_cast<std::size_t>(ch * area + k)] == 0.0);
        ++checked;
      }
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("forward passes are deterministic and late fusion differs from infusion") {
  const InfuseNetParams p = make_params(small_model(), 21);
  const InfuseNetParams late = make_params(small_model(FusionMode::late), 21);
  const DiffTensor flow(random_tensor({2, 3, 16, 16}, 22)), mag(random_tensor({2, 8, 16, 16}, 23));
  Tape tape;
  CHECK(forward(tape, flow, mag, p).value() == forward(tape, flow, mag, p).value());
  CHECK(forward(tape, flow, mag, late).value() == forward(tape, flow, mag, late).value());
  CHECK(forward(tape, flow, mag, p).value() != forward(tape, flow, mag, late).value());
}

TEST_CASE("streams own disjoint parameters") {
  const InfuseNetParams p = make_params(small_model(), 1);
  for (const auto& [fn, ft] : p.flow_params())
    for (const auto& [mn, mt] : p.mag_params()) CHECK(ft.node() != mt.node());
  CHECK(p.named().size() == 4 + 4 + 2);
  CHECK(make_params(small_model(FusionMode::single_mag), 1).flow.blocks.empty());
}

TEST_CASE("end-to-end gradient check on a tiny network") {
  ModelConfig cfg;
  cfg.backbone.blocks = 2;
  cfg.backbone.widths = {2, 2};
  cfg.flow_channels = 3;
  cfg.mag_channels = 4;
  for (std::uint64_t seed : {31, 32, 33}) {
    CAPTURE(seed);
    const InfuseNetParams p = make_params(cfg, seed);
    randomise_biases(p, seed + 1);
    Tensor labels({2, 12});
    for (std::size_t k = 0; k < labels.size(); k += 5) labels.data[k] = 1.0;
    const DiffTensor flow(random_tensor({2, 3, 8, 8}, seed + 2), true), mag(random_tensor({2, 4, 8, 8}, seed + 3), true);
    std::vector<DiffTensor> inputs = {flow, mag};
    for (const auto& [name, t] : p.named()) inputs.push_back(t);
    const auto r = nn::grad_check(
        [&](Tape& t, std::span<const DiffTensor> in) { return nn::bce_multilabel_loss(t, forward(t, in[0], in[1], p), labels); },
        inputs, 1e-5);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("saliency contracts") {
  const InfuseNetParams p = make_params(small_model(), 41);
  randomise_biases(p, 42);
  const DiffTensor flow(random_tensor({1, 3, 16, 16}, 43)), mag(random_tensor({1, 8, 16, 16}, 44));
  for (int k = 0; k < 12; ++k) {
    const SaliencyMap m = saliency_map(flow, mag, p, k);
    CHECK(m.height == 16);
    for (double v : m.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  auto& w = const_cast<DiffTensor&>(p.head.weight).mutable_value();
  for (int j = 0; j < w.dim(1); ++j) w.data[static_cast<std::size_t>(3 * w.dim(1) + j)] = 0.0;
  const SaliencyMap zero = saliency_map(flow, mag, p, 3);
  CHECK(zero.data == std::vector<double>(256, 0.0));
  CHECK_ERRC(saliency_map(flow, mag, p, 12), Errc::invalid_argument);
}

TEST_CASE("model config validation and mode names") {
  ModelConfig cfg;
  cfg.backbone.widths = {8, 8};
  CHECK_ERRC(cfg.validate(), Errc::validation);
  cfg = {};
  cfg.backbone.kernel = 4;
  CHECK_ERRC(cfg.validate(), Errc::validation);
  for (auto m : {FusionMode::infuse, FusionMode::late, FusionMode::single_flow, FusionMode::single_mag})
    CHECK(fusion_mode_from_string(to_string(m)) == m);
  CHECK_ERRC(fusion_mode_from_string("bogus"), Errc::validation);
  const InfuseNetParams p = make_params(small_model(), 1);
  Tape tape;
  CHECK_ERRC(forward_infusenet(tape, DiffTensor(Tensor({1, 3, 16, 16})), DiffTensor(Tensor({1, 8, 8, 8})), p),
             Errc::dimension_mismatch);
}
