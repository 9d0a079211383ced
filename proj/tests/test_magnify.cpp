#include <algorithm>
#include <cmath>

#include "infusenet/magnify.hpp"
#include "infusenet/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ifn;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

LatentStack add_stacks(const LatentStack& a, const LatentStack& b, double sb = 1.0) {
  LatentStack out = a;
  for (std::size_t l = 0; l < out.bands.size(); ++l)
    for (std::size_t i = 0; i < out.bands[l].data.size(); ++i) out.bands[l].data[i] += sb * b.bands[l].data[i];
  for (std::size_t i = 0; i < out.residual.data.size(); ++i) out.residual.data[i] += sb * b.residual.data[i];
  return out;
}

double stack_diff(const LatentStack& a, const LatentStack& b) {
  double m = max_abs(a.residual.data, b.residual.data);
  for (std::size_t l = 0; l < a.bands.size(); ++l) m = std::max(m, max_abs(a.bands[l].data, b.bands[l].data));
  return m;
}

}  // namespace

TEST_CASE("encode level geometry") {
  const LatentStack lat = encode(random_image(64, 64, 1), 3);
  REQUIRE(lat.depth() == 3);
  CHECK(lat.bands[0].height == 64);
  CHECK(lat.bands[1].height == 32);
  CHECK(lat.bands[2].width == 16);
  CHECK(lat.residual.height == 8);
  CHECK(lat.residual.width == 8);
  CHECK(lat.level_count() == 4);
  CHECK_ERRC(encode(random_image(60, 64, 1), 3), Errc::dimension_mismatch);
}

TEST_CASE("constant image has zero detail") {
  const LatentStack lat = encode(Image(32, 32, 0.4), 3);
  for (const auto& b : lat.bands)
    for (double v : b.data) CHECK(std::abs(v) < 1e-15);
  for (double v : lat.residual.data) CHECK(v == doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("encode is linear") {
  const Image a = random_image(32, 32, 2), b = random_image(32, 32, 3);
  Image sum(32, 32);
  for (std::size_t i = 0; i < sum.size(); ++i) sum.data[i] = a.data[i] + b.data[i];
  CHECK(stack_diff(encode(sum, 3), add_stacks(encode(a, 3), encode(b, 3))) < 1e-13);
}

TEST_CASE("perfect reconstruction") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Image x = random_image(64, 64, 100 + seed);
    CHECK(max_abs(decode(encode(x, 3)).data, x.data) < 1e-6);
    CHECK(max_abs(reconstruct(encode(x, 4)).data, x.data) < 1e-12);
  }
  LatentStack zero = encode(Image(16, 16), 2);
  CHECK(decode(zero).data == std::vector<double>(256, 0.0));
}

TEST_CASE("manipulate identities") {
  const LatentStack a = encode(random_image(32, 32, 5), 3), b = encode(random_image(32, 32, 6), 3);
  CHECK(manipulate(a, b, 0.0) == b);
  CHECK(manipulate(b, b, 7.5) == b);
  const Image x = random_image(32, 32, 7);
  const LatentStack ex = encode(x, 3);
  CHECK(max_abs(decode(manipulate(ex, ex, 10.0)).data, x.data) < 1e-6);
  CHECK_ERRC(manipulate(a, encode(random_image(32, 32, 6), 2), 1.0), Errc::structure_mismatch);
}

TEST_CASE("manipulate is linear in each argument") {
  const LatentStack a1 = encode(random_image(16, 16, 8), 2), a2 = encode(random_image(16, 16, 9), 2);
  const LatentStack b = encode(random_image(16, 16, 10), 2);
  const double alpha = 3.0;
  // m(a1 + a2, b) - m(a1, b) = -alpha * a2 on bands.
  const LatentStack lhs = add_stacks(manipulate(add_stacks(a1, a2), b, alpha), manipulate(a1, b, alpha), -1.0);
  for (std::size_t l = 0; l < lhs.bands.size(); ++l)
    for (std::size_t i = 0; i < lhs.bands[l].data.size(); ++i)
      CHECK(lhs.bands[l].data[i] == doctest::Approx(-alpha * a2.bands[l].data[i]).epsilon(1e-12).scale(1.0));
  // m(a, b1 + b2) = m(a, b1) + (1 + alpha) b2 on bands.
  const LatentStack rhs = add_stacks(manipulate(a1, add_stacks(b, a2), alpha), manipulate(a1, b, alpha), -1.0);
  for (std::size_t l = 0; l < rhs.bands.size(); ++l)
    for (std::size_t i = 0; i < rhs.bands[l].data.size(); ++i)
      CHECK(rhs.bands[l].data[i] == doctest::Approx((1 + alpha) * a2.bands[l].data[i]).epsilon(1e-12).scale(1.0));
}

TEST_CASE("amplification law on sinusoidal gratings") {
  const int n = 64, depth = 5, cycles = 1;
  for (double delta : {0.2, 0.3, 0.5}) {
    for (double alpha : {2.0, 5.0}) {
      CAPTURE(delta);
      CAPTURE(alpha);
      const Image a = oracle::grating(n, n, n / cycles, 0.0, 0.1);
      const Image b = oracle::grating(n, n, n / cycles, delta, 0.1);
      const Image out = decode(manipulate(encode(a, depth), encode(b, depth), alpha));
      const double measured = oracle::phase_shift_x(a, out, cycles);
      const double expected = (1.0 + alpha) * delta;
      CHECK(std::abs(measured - expected) <= 0.15 * expected);
    }
  }
}

TEST_CASE("oracle recovers plain grating shifts") {
  const Image a = oracle::grating(16, 64, 64, 0.0), b = oracle::grating(16, 64, 64, 0.37);
  CHECK(oracle::phase_shift_x(a, b, 1) == doctest::Approx(0.37).epsilon(1e-9));
}

TEST_CASE("magnified pair layout") {
  SequenceSpec spec;
  spec.au_labels[2] = 1;
  const Sequence seq = gen_sequence(spec);
  const Image& on = seq.frames[0];
  const Image& ap = seq.frames[8];
  MagConfig cfg;

  const MagTensor t = magnified_latent_pair(on, ap, ap, cfg);
  REQUIRE(t.channels == 8);
  const std::size_t half = 4u * 64 * 64;
  CHECK(std::equal(t.data.begin(), t.data.begin() + half, t.data.begin() + half));

  const MagTensor same = magnified_latent_pair(on, on, on, {17.0, 3});
  const MagTensor levels = resample_levels(encode(on, 3));
  CHECK(std::equal(levels.data.begin(), levels.data.end(), same.data.begin()));
  CHECK(std::equal(levels.data.begin(), levels.data.end(), same.data.begin() + half));

  const MagTensor d = decoded_magnified_pair(on, ap, seq.frames[10], cfg);
  CHECK(d.channels == 2);
  const MagTensor half_d = magnified_half(encode(on, 3), ap, cfg, true);
  CHECK(half_d.channels == 1);
  CHECK(std::equal(half_d.data.begin(), half_d.data.end(), d.data.begin()));

  const MagTensor back = MagTensor::from_tensor(t.to_tensor());
  CHECK(back.channels == 8);
  CHECK(back.height == 64);
}

TEST_CASE("resample_levels keeps the finest band and residual scale") {
  const LatentStack lat = encode(Image(32, 32, 0.6), 2);
  const MagTensor t = resample_levels(lat);
  REQUIRE(t.channels == 3);
  for (int i = 0; i < 32 * 32; ++i) CHECK(t.data[2 * 32 * 32 + i] == doctest::Approx(0.6));
}

TEST_CASE("artefacts grow with the magnification factor") {
  const int n = 64;
  const Image clean_a = oracle::grating(n, n, 16, 0.0, 0.15), clean_b = oracle::grating(n, n, 16, 0.3, 0.15);
  const NoiseSpec speckle{0.0, 0.08, 0.0};
  const Image noisy_a = inject_artefacts(clean_a, speckle, 1), noisy_b = inject_artefacts(clean_b, speckle, 2);
  double prev = -1.0;
  for (double alpha : {2.0, 5.0, 10.0, 20.0}) {
    const Image clean = decode(manipulate(encode(clean_a, 3), encode(clean_b, 3), alpha));
    const Image noisy = decode(manipulate(encode(noisy_a, 3), encode(noisy_b, 3), alpha));
    double mae = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) mae += std::abs(clean.data[i] - noisy.data[i]);
    mae /= static_cast<double>(clean.size());
    CHECK(mae >= prev);
    prev = mae;
  }
}

TEST_CASE("config validation") {
  CHECK_ERRC(validate(MagConfig{-1.0, 3}), Errc::invalid_argument);
  CHECK_ERRC(validate(MagConfig{1.0, 0}), Errc::invalid_argument);
}
