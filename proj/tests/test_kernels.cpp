#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "infusenet/kernels.hpp"
#include "test_util.hpp"

using namespace ifn;
using kernels::ConvShape;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::size_t idx(int a, int b, int c, int d, int B, int C, int D) {
  return ((static_cast<std::size_t>(a) * B + b) * C + c) * D + d;
}

// Direct seven-loop cross-correlation with zero padding.
std::vector<double> naive_conv(const ConvShape& s, const std::vector<double>& x, const std::vector<double>& w,
                               const std::vector<double>& b) {
  const int r = s.kernel / 2;
  std::vector<double> y(static_cast<std::size_t>(s.batch) * s.out_channels * s.height * s.width);
  for (int n = 0; n < s.batch; ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int i = 0; i < s.height; ++i)
        for (int j = 0; j < s.width; ++j) {
          double acc = b[o];
          for (int c = 0; c < s.in_channels; ++c)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int yy = i + ky - r, xx = j + kx - r;
                if (yy < 0 || yy >= s.height || xx < 0 || xx >= s.width) continue;
                acc += w[idx(o, c, ky, kx, s.in_channels, s.kernel, s.kernel)] *
                       x[idx(n, c, yy, xx, s.in_channels, s.height, s.width)];
              }
          y[idx(n, o, i, j, s.out_channels, s.height, s.width)] = acc;
        }
  return y;
}

// Gradients of sum(y * gy) via the same direct loops.
void naive_conv_backward(const ConvShape& s, const std::vector<double>& x, const std::vector<double>& w,
                         const std::vector<double>& gy, std::vector<double>& gx, std::vector<double>& gw,
                         std::vector<double>& gb) {
  const int r = s.kernel / 2;
  gx.assign(x.size(), 0.0);
  gw.assign(w.size(), 0.0);
  gb.assign(static_cast<std::size_t>(s.out_channels), 0.0);
  for (int n = 0; n < s.batch; ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int i = 0; i < s.height; ++i)
        for (int j = 0; j < s.width; ++j) {
          const double g = gy[idx(n, o, i, j, s.out_channels, s.height, s.width)];
          gb[o] += g;
          for (int c = 0; c < s.in_channels; ++c)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int yy = i + ky - r, xx = j + kx - r;
                if (yy < 0 || yy >= s.height || xx < 0 || xx >= s.width) continue;
                const std::size_t xi = idx(n, c, yy, xx, s.in_channels, s.height, s.width);
                const std::size_t wi = idx(o, c, ky, kx, s.in_channels, s.kernel, s.kernel);
                gw[wi] += g * x[xi];
                gx[xi] += g * w[wi];
              }
        }
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

const ConvShape kShapes[] = {
    {1, 1, 1, 2, 2, 1},   {2, 3, 5, 7, 9, 3},  {1, 2, 9, 8, 8, 5},    {3, 4, 17, 6, 11, 3},
    {2, 16, 8, 16, 16, 3}, {1, 3, 2, 9, 5, 7}, {2, 5, 12, 4, 4, 1},   {1, 1, 3, 1, 1, 3},
};

struct Threads {
  int saved = omp_get_max_threads();
  explicit Threads(int n) { omp_set_num_threads(n); }
  ~Threads() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("conv forward matches the direct loops") {
  for (const auto& s : kShapes) {
    CAPTURE(s.in_channels);
    CAPTURE(s.out_channels);
    CAPTURE(s.kernel);
    const auto x = random_vec(static_cast<std::size_t>(s.batch) * s.in_channels * s.height * s.width, 1);
    const auto w = random_vec(static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel, 2);
    const auto b = random_vec(static_cast<std::size_t>(s.out_channels), 3);
    const auto ref = naive_conv(s, x, w, b);
    std::vector<double> y(ref.size(), 123.0);
    kernels::serial::conv2d_forward(s, x, w, b, y);
    CHECK(max_abs_diff(y, ref) < 1e-12);
  }
}

TEST_CASE("conv backward matches the direct loops and accumulates") {
  for (const auto& s : kShapes) {
    CAPTURE(s.kernel);
    const auto x = random_vec(static_cast<std::size_t>(s.batch) * s.in_channels * s.height * s.width, 4);
    const auto w = random_vec(static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel, 5);
    const auto gy = random_vec(static_cast<std::size_t>(s.batch) * s.out_channels * s.height * s.width, 6);
    std::vector<double> rgx, rgw, rgb;
    naive_conv_backward(s, x, w, gy, rgx, rgw, rgb);

    // Start from nonzero buffers: the kernels add into them.
    std::vector<double> gx(x.size(), 0.25), gw(w.size(), -0.5), gb(rgb.size(), 2.0);
    kernels::serial::conv2d_backward_input(s, w, gy, gx);
    kernels::serial::conv2d_backward_weight(s, x, gy, gw, gb);
    for (auto& v : rgx) v += 0.25;
    for (auto& v : rgw) v -= 0.5;
    for (auto& v : rgb) v += 2.0;
    CHECK(max_abs_diff(gx, rgx) < 1e-12);
    CHECK(max_abs_diff(gw, rgw) < 1e-11);
    CHECK(max_abs_diff(gb, rgb) < 1e-11);
  }
}

TEST_CASE("serial and omp kernels are bit-identical") {
  Threads threads(4);
  for (const auto& s : kShapes) {
    const auto x = random_vec(static_cast<std::size_t>(s.batch) * s.in_channels * s.height * s.width, 7);
    const auto w = random_vec(static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel, 8);
    const auto b = random_vec(static_cast<std::size_t>(s.out_channels), 9);
    const auto gy = random_vec(static_cast<std::size_t>(s.batch) * s.out_channels * s.height * s.width, 10);
    std::vector<double> y1(gy.size()), y2(gy.size());
    kernels::serial::conv2d_forward(s, x, w, b, y1);
    kernels::omp::conv2d_forward(s, x, w, b, y2);
    CHECK(y1 == y2);

    std::vector<double> gx1(x.size()), gx2(x.size()), gw1(w.size()), gw2(w.size()), gb1(b.size()), gb2(b.size());
    kernels::serial::conv2d_backward_input(s, w, gy, gx1);
    kernels::omp::conv2d_backward_input(s, w, gy, gx2);
    kernels::serial::conv2d_backward_weight(s, x, gy, gw1, gb1);
    kernels::omp::conv2d_backward_weight(s, x, gy, gw2, gb2);
    CHECK(gx1 == gx2);
    CHECK(gw1 == gw2);
    CHECK(gb1 == gb2);
  }

  const int h = 32, w = 24;
  const auto ix = random_vec(h * w, 11), iy = random_vec(h * w, 12), c = random_vec(h * w, 13);
  const kernels::FlowTerms terms{h, w, ix, iy, c};
  std::vector<double> u1(h * w, 0.0), v1(h * w, 0.0);
  auto u2 = u1, v2 = v1;
  for (int sweep = 0; sweep < 6; ++sweep) {
    const double d1 = kernels::serial::hs_sweep(terms, 0.01, sweep % 2, u1, v1);
    const double d2 = kernels::omp::hs_sweep(terms, 0.01, sweep % 2, u2, v2);
    CHECK(d1 == d2);
  }
  CHECK(u1 == u2);
  CHECK(v1 == v2);

  const auto img = random_vec(h * w, 14, 0.0, 1.0);
  std::vector<double> d1(h * w / 4), d2(h * w / 4), up1(h * w), up2(h * w), r1(17 * 13), r2(17 * 13);
  kernels::serial::pyr_down(img, h, w, d1);
  kernels::omp::pyr_down(img, h, w, d2);
  CHECK(d1 == d2);
  kernels::serial::pyr_up(d1, h / 2, w / 2, up1);
  kernels::omp::pyr_up(d1, h / 2, w / 2, up2);
  CHECK(up1 == up2);
  kernels::serial::resize_bilinear(img, h, w, r1, 17, 13);
  kernels::omp::resize_bilinear(img, h, w, r2, 17, 13);
  CHECK(r1 == r2);
}

TEST_CASE("hs_sweep only updates its colour") {
  const int h = 8, w = 8;
  const auto ix = random_vec(h * w, 21), iy = random_vec(h * w, 22), c = random_vec(h * w, 23);
  std::vector<double> u(h * w, 0.0), v(h * w, 0.0);
  kernels::serial::hs_sweep({h, w, ix, iy, c}, 0.05, 0, u, v);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((x + y) % 2 == 1) {
        CHECK(u[y * w + x] == 0.0);
        CHECK(v[y * w + x] == 0.0);
      }
}

TEST_CASE("pyramid filters preserve constants") {
  const int h = 16, w = 16;
  std::vector<double> img(h * w, 0.375), down(h * w / 4), up(h * w);
  kernels::serial::pyr_down(img, h, w, down);
  for (double v : down) CHECK(v == doctest::Approx(0.375).epsilon(1e-15));
  kernels::serial::pyr_up(down, h / 2, w / 2, up);
  for (double v : up) CHECK(v == doctest::Approx(0.375).epsilon(1e-15));
}

TEST_CASE("resize_bilinear identity and constant") {
  const auto img = random_vec(6 * 10, 31);
  std::vector<double> same(img.size());
  kernels::serial::resize_bilinear(img, 6, 10, same, 6, 10);
  CHECK(max_abs_diff(same, img) < 1e-15);
  std::vector<double> c(4, 2.5), big(64);
  kernels::serial::resize_bilinear(c, 2, 2, big, 8, 8);
  for (double v : big) CHECK(v == 2.5);
}
