#include <algorithm>
#include <cmath>

#include "infusenet/flow.hpp"
#include "infusenet/synth.hpp"
#include "test_util.hpp"

using namespace ifn;

namespace {

Image gaussian_blob(int h, int w, double cy, double cx, double sigma) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(y, x) = 0.2 + 0.6 * std::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (2 * sigma * sigma));
  return img;
}

FlowField affine_flow(int h, int w, double pc, double px, double py, double qc, double qx, double qy) {
  FlowField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t k = static_cast<std::size_t>(y) * w + x;
      f.p[k] = pc + px * x + py * y;
      f.q[k] = qc + qx * x + qy * y;
    }
  return f;
}

template <typename Fn>
void for_interior(const StrainMap& s, Fn fn) {
  for (int y = 1; y + 1 < s.height; ++y)
    for (int x = 1; x + 1 < s.width; ++x) fn(static_cast<std::size_t>(y) * s.width + x);
}

}  // namespace

TEST_CASE("identical frames give exactly zero flow") {
  SequenceSpec spec;
  spec.au_labels[0] = 1;
  const Image f = gen_sequence(spec).frames[4];
  const FlowField flow = compute_flow(f, f);
  for (std::size_t k = 0; k < flow.size(); ++k) {
    CHECK(flow.p[k] == 0.0);
    CHECK(flow.q[k] == 0.0);
  }
}

TEST_CASE("textureless frames give zero flow") {
  const FlowField flow = compute_flow(Image(32, 32, 0.3), Image(32, 32, 0.7));
  for (std::size_t k = 0; k < flow.size(); ++k) {
    CHECK(flow.p[k] == 0.0);
    CHECK(flow.q[k] == 0.0);
  }
}

TEST_CASE("translated Gaussian blob endpoint error") {
  const int h = 64, w = 64;
  const Image a = gaussian_blob(h, w, 32.0, 32.0, 6.0);
  const Image b = gaussian_blob(h, w, 32.0, 33.0, 6.0);
  const FlowField flow = compute_flow(a, b);

  // Textured support: gradient magnitude above 10% of its maximum.
  std::vector<double> grad(a.size(), 0.0);
  double gmax = 0.0;
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double gx = 0.5 * (a.at(y, x + 1) - a.at(y, x - 1));
      const double gy = 0.5 * (a.at(y + 1, x) - a.at(y - 1, x));
      grad[static_cast<std::size_t>(y) * w + x] = std::hypot(gx, gy);
      gmax = std::max(gmax, grad[static_cast<std::size_t>(y) * w + x]);
    }
  double epe = 0.0;
  int n = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (grad[k] <= 0.1 * gmax) continue;
    epe += std::hypot(flow.p[k] - 1.0, flow.q[k]);
    ++n;
  }
  REQUIRE(n > 100);
  CHECK(epe / n < 0.25);
}

TEST_CASE("swapping the frames approximately negates the flow") {
  for (std::uint64_t seed : {1, 2, 3}) {
    SequenceSpec spec;
    spec.au_labels = {1, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1, 0};
    spec.displacement_px = 0.6;
    spec.seed = seed;
    const Sequence seq = gen_sequence(spec);
    const Image& a = seq.frames[0];
    const Image& b = seq.frames[static_cast<std::size_t>(spec.apex_index)];
    const FlowField f = compute_flow(a, b), g = compute_flow(b, a);
    double sum = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) sum += std::hypot(f.p[k] + g.p[k], f.q[k] + g.q[k]);
    CHECK(sum / static_cast<double>(f.size()) < 0.1);
  }
}

TEST_CASE("solver energy never increases") {
  SequenceSpec spec;
  spec.au_labels = {0, 1, 0, 1, 0, 1, 1, 0, 0, 1, 0, 1};
  spec.noise = {0.02, 0.1, 0.01};
  spec.seed = 8;
  const Sequence seq = gen_sequence(spec);
  FlowDiagnostics diag;
  compute_flow(seq.frames[0], seq.frames[8], {}, &diag);
  REQUIRE(!diag.energy.empty());
  CHECK(diag.sweeps > 0);
  for (const auto& trace : diag.energy) {
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] * (1.0 + 1e-12) + 1e-15);
  }
}

TEST_CASE("flow argument errors") {
  CHECK_ERRC(compute_flow(Image(16, 16), Image(16, 17)), Errc::dimension_mismatch);
  FlowParams p;
  p.lambda = 0.0;
  CHECK_ERRC(compute_flow(Image(16, 16), Image(16, 16), p), Errc::invalid_argument);
}

TEST_CASE("strain of uniform flow is exactly zero") {
  const StrainMap s = compute_strain(affine_flow(12, 10, 0.7, 0, 0, -1.3, 0, 0));
  for (std::size_t k = 0; k < s.magnitude.size(); ++k) {
    CHECK(s.exx[k] == 0.0);
    CHECK(s.eyy[k] == 0.0);
    CHECK(s.exy[k] == 0.0);
    CHECK(s.magnitude[k] == 0.0);
  }
}

TEST_CASE("strain analytics") {
  const double a = 0.037;
  SUBCASE("stretch") {
    const StrainMap s = compute_strain(affine_flow(12, 10, 0, a, 0, 0, 0, 0));
    for_interior(s, [&](std::size_t k) {
      CHECK(std::abs(s.exx[k] - a) < 1e-10);
      CHECK(std::abs(s.exy[k]) < 1e-10);
      CHECK(std::abs(s.magnitude[k] - std::abs(a)) < 1e-10);
    });
  }
  SUBCASE("pure shear") {
    const StrainMap s = compute_strain(affine_flow(12, 10, 0, 0, a, 0, a, 0));
    for_interior(s, [&](std::size_t k) {
      CHECK(std::abs(s.exy[k] - a) < 1e-10);
      CHECK(std::abs(s.magnitude[k] - std::sqrt(2.0) * std::abs(a)) < 1e-10);
    });
  }
}

TEST_CASE("strain ignores a global translation") {
  Rng rng(4);
  FlowField f(9, 11);
  for (auto& v : f.p) v = rng.uniform(-1, 1);
  for (auto& v : f.q) v = rng.uniform(-1, 1);
  FlowField g = f;
  for (auto& v : g.p) v += 0.5;
  for (auto& v : g.q) v -= 0.25;
  const StrainMap s1 = compute_strain(f), s2 = compute_strain(g);
  // Adding 0.5 or 0.25 to values in [-1,1] is exact, so differences are exact too.
  CHECK(s1.magnitude == s2.magnitude);
  CHECK(s1.exy == s2.exy);
}

TEST_CASE("build_flow_image assembly") {
  SUBCASE("zero") {
    const FlowField f(8, 8);
    const OpticalFlowImage img = build_flow_image(f, compute_strain(f));
    CHECK(img.data == std::vector<double>(3 * 64, 0.0));
  }
  SUBCASE("uniform") {
    const FlowField f = affine_flow(8, 8, 1, 0, 0, 2, 0, 0);
    const OpticalFlowImage img = build_flow_image(f, compute_strain(f));
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        CHECK(img.at(0, y, x) == 1.0);
        CHECK(img.at(1, y, x) == 2.0);
        CHECK(img.at(2, y, x) == 0.0);
      }
  }
  SUBCASE("strain channel equals the recomputed magnitude") {
    SequenceSpec spec;
    spec.au_labels[5] = 1;
    const Sequence seq = gen_sequence(spec);
    const OpticalFlowImage img = optical_flow_image(seq.frames[0], seq.frames[8]);
    const FlowField flow = compute_flow(seq.frames[0], seq.frames[8]);
    const StrainMap s = compute_strain(flow);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        CHECK(img.at(0, y, x) == flow.p[static_cast<std::size_t>(y) * 64 + x]);
        CHECK(img.at(2, y, x) == s.magnitude[static_cast<std::size_t>(y) * 64 + x]);
      }
    const OpticalFlowImage back = OpticalFlowImage::from_tensor(img.to_tensor());
    CHECK(back.height == 64);
    for (std::size_t k = 0; k < img.data.size(); ++k) CHECK(back.data[k] == static_cast<double>(static_cast<float>(img.data[k])));
  }
}

TEST_CASE("warp_image follows the flow") {
  Image img(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img.at(y, x) = x / 8.0;
  const Image out = warp_image(img, affine_flow(8, 8, 1.0, 0, 0, 0, 0, 0));
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x + 1 < 8; ++x) CHECK(out.at(y, x) == doctest::Approx((x + 1) / 8.0));
}
