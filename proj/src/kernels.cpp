#include "infusenet/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ifn::kernels {

namespace {

constexpr int kLanes = 8;

inline double combine_lanes(const std::array<double, kLanes>& acc) {
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Output channels computed together by the convolution core, and the x
// extent of one accumulator row.
constexpr int kOcBlock = 8;
constexpr int kVec = kLanes;

// Copies `planes` h x w planes into zero-bordered (h+2r) x (w+2r) planes.
// The buffer carries kVec trailing zeros so full-width loads at the last
// row stay in bounds.
template <bool Parallel>
std::vector<double> pad_planes(const double* in, int planes, int h, int w, int r) {
  const int ph = h + 2 * r, pw = w + 2 * r;
  const std::size_t pplane = static_cast<std::size_t>(ph) * pw;
  std::vector<double> out(pplane * planes + kVec, 0.0);
#pragma omp parallel for schedule(static) if (Parallel)
  for (int p = 0; p < planes; ++p) {
    for (int y = 0; y < h; ++y) {
      const double* src = in + (static_cast<std::size_t>(p) * h + y) * w;
      std::copy(src, src + w, out.data() + p * pplane + static_cast<std::size_t>(y + r) * pw + r);
    }
  }
  return out;
}

// out[n][oc] (+)= sum over ic, ky, kx of wr * xp[n][ic][y+ky][x+kx] with
// weights pre-arranged as wr[ocb][ic][ky][kx][o] (zero for missing o).
// Each task owns kOcBlock output planes of one sample.
template <bool Parallel, int K>
void conv_core(int batch, int cin, int cout, int h, int w, const double* xp, const double* wr, const double* bias,
               bool accumulate, double* out) {
  const int pw = w + K - 1, ph = h + K - 1;
  const std::size_t pplane = static_cast<std::size_t>(ph) * pw;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int oc_blocks = (cout + kOcBlock - 1) / kOcBlock;
  const int tasks = batch * oc_blocks;
#pragma omp parallel for schedule(static) if (Parallel)
  for (int t = 0; t < tasks; ++t) {
    const int n = t / oc_blocks, ocb = t % oc_blocks, oc0 = ocb * kOcBlock;
    const int ob = std::min(kOcBlock, cout - oc0);
    const double* wblock = wr + static_cast<std::size_t>(ocb) * cin * K * K * kOcBlock;
    for (int y = 0; y < h; ++y) {
      for (int x0 = 0; x0 < w; x0 += kVec) {
        const int xn = std::min(kVec, w - x0);
        double acc[kOcBlock][kVec];
        for (int o = 0; o < kOcBlock; ++o) {
          for (int j = 0; j < kVec; ++j) {
            double init = 0.0;
            if (o < ob && j < xn) {
              init = accumulate ? out[(n * cout + oc0 + o) * plane + static_cast<std::size_t>(y) * w + x0 + j]
                                : (bias ? bias[oc0 + o] : 0.0);
            }
            acc[o][j] = init;
          }
        }
        for (int ic = 0; ic < cin; ++ic) {
          const double* base = xp + (static_cast<std::size_t>(n) * cin + ic) * pplane + static_cast<std::size_t>(y) * pw + x0;
          const double* wk = wblock + static_cast<std::size_t>(ic) * K * K * kOcBlock;
          for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
              const double* src = base + static_cast<std::size_t>(ky) * pw + kx;
              const double* wv = wk + (ky * K + kx) * kOcBlock;
              for (int o = 0; o < kOcBlock; ++o) {
                const double c = wv[o];
#pragma omp simd
                for (int j = 0; j < kVec; ++j) acc[o][j] += c * src[j];
              }
            }
          }
        }
        for (int o = 0; o < ob; ++o) {
          double* dst = out + (n * cout + oc0 + o) * plane + static_cast<std::size_t>(y) * w + x0;
          for (int j = 0; j < xn; ++j) dst[j] = acc[o][j];
        }
      }
    }
  }
}

// Arranges w[oc][ic][ky][kx] (optionally flipped and with oc/ic swapped) as
// wr[ocb][ic][ky][kx][o].
std::vector<double> block_weights(const double* w, int cout, int cin, int k, bool transpose_flip) {
  const int out_c = transpose_flip ? cin : cout;
  const int in_c = transpose_flip ? cout : cin;
  const int blocks = (out_c + kOcBlock - 1) / kOcBlock;
  std::vector<double> wr(static_cast<std::size_t>(blocks) * in_c * k * k * kOcBlock, 0.0);
  for (int o = 0; o < out_c; ++o) {
    for (int i = 0; i < in_c; ++i) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double v = transpose_flip ? w[((static_cast<std::size_t>(i) * cin + o) * k + (k - 1 - ky)) * k + (k - 1 - kx)]
                                          : w[((static_cast<std::size_t>(o) * cin + i) * k + ky) * k + kx];
          wr[(((static_cast<std::size_t>(o / kOcBlock) * in_c + i) * k + ky) * k + kx) * kOcBlock + o % kOcBlock] = v;
        }
      }
    }
  }
  return wr;
}

// gw[oc][q] += sum over n, p of gy[n][oc][p] * col[n][q][p], where q runs
// over (ic, ky, kx) and col is the shifted padded input. The shifted input
// is packed in tiles of kNr columns so one task streams a contiguous panel;
// each task owns a kMr x kNr block of gw and sums over (n, p) in order.
template <bool Parallel>
void conv_weight_gemm(const ConvShape& s, const double* xp, const double* gy, double* gw) {
  constexpr int kMr = 8, kNr = 16;
  const int k = s.kernel, kk = k * k;
  const int pw = s.width + k - 1, ph = s.height + k - 1;
  const std::size_t pplane = static_cast<std::size_t>(ph) * pw;
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  const int q_count = s.in_channels * kk;
  const int q_tiles = (q_count + kNr - 1) / kNr;
  const int m_tiles = (s.out_channels + kMr - 1) / kMr;
  const std::size_t panel = static_cast<std::size_t>(s.batch) * plane * kNr;

  std::vector<double> pack(panel * q_tiles);
  const int pack_tasks = q_tiles * s.batch;
#pragma omp parallel for schedule(static) if (Parallel)
  for (int t = 0; t < pack_tasks; ++t) {
    const int qt = t / s.batch, n = t % s.batch;
    double* dst = pack.data() + qt * panel + static_cast<std::size_t>(n) * plane * kNr;
    const double* src[kNr];
    for (int j = 0; j < kNr; ++j) {
      const int q = std::min(qt * kNr + j, q_count - 1);
      const int ic = q / kk, ky = (q % kk) / k, kx = q % k;
      src[j] = xp + (static_cast<std::size_t>(n) * s.in_channels + ic) * pplane + static_cast<std::size_t>(ky) * pw + kx;
    }
    const int live = std::min(kNr, q_count - qt * kNr);
    for (int y = 0; y < s.height; ++y) {
      const std::size_t row = static_cast<std::size_t>(y) * pw;
      for (int x = 0; x < s.width; ++x) {
        double* out = dst + (static_cast<std::size_t>(y) * s.width + x) * kNr;
        for (int j = 0; j < kNr; ++j) out[j] = j < live ? src[j][row + x] : 0.0;
      }
    }
  }

  const std::vector<double> zeros(plane, 0.0);
#pragma omp parallel for schedule(static) if (Parallel)
  for (int qt = 0; qt < q_tiles; ++qt) {
    // Accumulators of every output tile live across samples so the panel
    // slice of one sample is reused by all tiles while it is cache resident.
    std::vector<double> acc_all(static_cast<std::size_t>(m_tiles) * kMr * kNr, 0.0);
    const double* b = pack.data() + qt * panel;
    for (int n = 0; n < s.batch; ++n) {
      const double* bn = b + static_cast<std::size_t>(n) * plane * kNr;
      for (int mt = 0; mt < m_tiles; ++mt) {
        double acc[kMr][kNr];
        double* saved = acc_all.data() + static_cast<std::size_t>(mt) * kMr * kNr;
        std::copy(saved, saved + kMr * kNr, &acc[0][0]);
        const double* a[kMr];
        for (int m = 0; m < kMr; ++m) {
          const int oc = mt * kMr + m;
          a[m] = oc < s.out_channels ? gy + (static_cast<std::size_t>(n) * s.out_channels + oc) * plane : zeros.data();
        }
        for (std::size_t p = 0; p < plane; ++p) {
          const double* bp = bn + p * kNr;
          for (int m = 0; m < kMr; ++m) {
            const double av = a[m][p];
#pragma omp simd
            for (int j = 0; j < kNr; ++j) acc[m][j] += av * bp[j];
          }
        }
        std::copy(&acc[0][0], &acc[0][0] + kMr * kNr, saved);
      }
    }
    for (int mt = 0; mt < m_tiles; ++mt) {
      for (int m = 0; m < kMr; ++m) {
        const int oc = mt * kMr + m;
        if (oc >= s.out_channels) break;
        for (int j = 0; j < kNr; ++j) {
          const int q = qt * kNr + j;
          if (q < q_count) gw[static_cast<std::size_t>(oc) * q_count + q] += acc_all[(static_cast<std::size_t>(mt) * kMr + m) * kNr + j];
        }
      }
    }
  }
}

// Calls fn.template operator()<K>() for the supported odd kernel sizes.
template <typename Fn>
void with_kernel_size(int k, Fn&& fn) {
  switch (k) {
    case 1: fn.template operator()<1>(); return;
    case 3: fn.template operator()<3>(); return;
    case 5: fn.template operator()<5>(); return;
    case 7: fn.template operator()<7>(); return;
    default: throw std::invalid_argument("unsupported conv kernel size " + std::to_string(k));
  }
}

inline int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

constexpr std::array<double, 5> kBinomial = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

template <bool Parallel>
void conv2d_forward_impl(const ConvShape& s, std::span<const double> x, std::span<const double> w,
                         std::span<const double> b, std::span<double> y) {
  const int r = s.kernel / 2;
  const auto xp = pad_planes<Parallel>(x.data(), s.batch * s.in_channels, s.height, s.width, r);
  const auto wr = block_weights(w.data(), s.out_channels, s.in_channels, s.kernel, false);
  with_kernel_size(s.kernel, [&]<int K>() {
    conv_core<Parallel, K>(s.batch, s.in_channels, s.out_channels, s.height, s.width, xp.data(), wr.data(),
                           b.empty() ? nullptr : b.data(), false, y.data());
  });
}

template <bool Parallel>
void conv2d_backward_input_impl(const ConvShape& s, std::span<const double> w, std::span<const double> gy,
                                std::span<double> gx) {
  // Transposed convolution: a forward pass over the padded output gradient
  // with flipped kernels and swapped channel roles.
  const int r = s.kernel / 2;
  const auto gp = pad_planes<Parallel>(gy.data(), s.batch * s.out_channels, s.height, s.width, r);
  const auto wr = block_weights(w.data(), s.out_channels, s.in_channels, s.kernel, true);
  with_kernel_size(s.kernel, [&]<int K>() {
    conv_core<Parallel, K>(s.batch, s.out_channels, s.in_channels, s.height, s.width, gp.data(), wr.data(), nullptr,
                           true, gx.data());
  });
}

template <bool Parallel>
void conv2d_backward_weight_impl(const ConvShape& s, std::span<const double> x, std::span<const double> gy,
                                 std::span<double> gw, std::span<double> gb) {
  const int r = s.kernel / 2;
  const int plane = s.height * s.width;
  const auto xp = pad_planes<Parallel>(x.data(), s.batch * s.in_channels, s.height, s.width, r);
  conv_weight_gemm<Parallel>(s, xp.data(), gy.data(), gw.data());
  if (gb.empty()) return;
#pragma omp parallel for schedule(static) if (Parallel)
  for (int oc = 0; oc < s.out_channels; ++oc) {
    std::array<double, kLanes> acc{};
    for (int n = 0; n < s.batch; ++n) {
      const double* g = gy.data() + (static_cast<std::ptrdiff_t>(n) * s.out_channels + oc) * plane;
      int i = 0;
      for (; i + kLanes <= plane; i += kLanes) {
        for (int j = 0; j < kLanes; ++j) acc[j] += g[i + j];
      }
      for (int j = 0; i < plane; ++i, ++j) acc[j] += g[i];
    }
    gb[oc] += combine_lanes(acc);
  }
}

template <bool Parallel>
double hs_sweep_impl(const FlowTerms& t, double lambda, int color, std::span<double> u, std::span<double> v) {
  const int h = t.height, w = t.width;
  std::vector<double> row_change(static_cast<std::size_t>(h), 0.0);
#pragma omp parallel for schedule(static) if (Parallel)
  for (int y = 0; y < h; ++y) {
    double change = 0.0;
    for (int x = (y + color) & 1; x < w; x += 2) {
      const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(y) * w + x;
      double su = 0.0, sv = 0.0;
      int nb = 0;
      if (x > 0) { su += u[i - 1]; sv += v[i - 1]; ++nb; }
      if (x + 1 < w) { su += u[i + 1]; sv += v[i + 1]; ++nb; }
      if (y > 0) { su += u[i - w]; sv += v[i - w]; ++nb; }
      if (y + 1 < h) { su += u[i + w]; sv += v[i + w]; ++nb; }
      const double ubar = su / nb, vbar = sv / nb;
      const double a = t.ix[i], b = t.iy[i];
      const double k = (a * ubar + b * vbar + t.c[i]) / (lambda * nb + a * a + b * b);
      const double nu = ubar - a * k, nv = vbar - b * k;
      change = std::max({change, std::abs(nu - u[i]), std::abs(nv - v[i])});
      u[i] = nu;
      v[i] = nv;
    }
    row_change[static_cast<std::size_t>(y)] = change;
  }
  return *std::max_element(row_change.begin(), row_change.end());
}

template <bool Parallel>
void pyr_down_impl(std::span<const double> in, int h, int w, std::span<double> out) {
  const int oh = h / 2, ow = w / 2;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
#pragma omp parallel for schedule(static) if (Parallel)
  for (int y = 0; y < h; ++y) {
    const double* src = in.data() + static_cast<std::ptrdiff_t>(y) * w;
    double* dst = tmp.data() + static_cast<std::ptrdiff_t>(y) * ow;
    for (int j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int k = -2; k <= 2; ++k) s += kBinomial[k + 2] * src[wrap(2 * j + k, w)];
      dst[j] = s;
    }
  }
#pragma omp parallel for schedule(static) if (Parallel)
  for (int i = 0; i < oh; ++i) {
    double* dst = out.data() + static_cast<std::ptrdiff_t>(i) * ow;
    std::fill(dst, dst + ow, 0.0);
    for (int k = -2; k <= 2; ++k) {
      const double* src = tmp.data() + static_cast<std::ptrdiff_t>(wrap(2 * i + k, h)) * ow;
      for (int j = 0; j < ow; ++j) dst[j] += kBinomial[k + 2] * src[j];
    }
  }
}

template <bool Parallel>
void pyr_up_impl(std::span<const double> in, int h, int w, std::span<double> out) {
  const int oh = 2 * h, ow = 2 * w;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  // Zero insertion followed by the binomial blur reduces to two polyphase
  // filters; the factor 2 per axis restores the mean.
#pragma omp parallel for schedule(static) if (Parallel)
  for (int y = 0; y < h; ++y) {
    const double* src = in.data() + static_cast<std::ptrdiff_t>(y) * w;
    double* dst = tmp.data() + static_cast<std::ptrdiff_t>(y) * ow;
    for (int j = 0; j < w; ++j) {
      const double l = src[wrap(j - 1, w)], c = src[j], r = src[wrap(j + 1, w)];
      dst[2 * j] = 2.0 * (kBinomial[0] * l + kBinomial[2] * c + kBinomial[4] * r);
      dst[2 * j + 1] = 2.0 * (kBinomial[1] * c + kBinomial[3] * r);
    }
  }
#pragma omp parallel for schedule(static) if (Parallel)
  for (int y = 0; y < oh; ++y) {
    double* dst = out.data() + static_cast<std::ptrdiff_t>(y) * ow;
    const int i = y / 2;
    if (y % 2 == 0) {
      const double* l = tmp.data() + static_cast<std::ptrdiff_t>(wrap(i - 1, h)) * ow;
      const double* c = tmp.data() + static_cast<std::ptrdiff_t>(i) * ow;
      const double* r = tmp.data() + static_cast<std::ptrdiff_t>(wrap(i + 1, h)) * ow;
      for (int x = 0; x < ow; ++x) dst[x] = 2.0 * (kBinomial[0] * l[x] + kBinomial[2] * c[x] + kBinomial[4] * r[x]);
    } else {
      const double* c = tmp.data() + static_cast<std::ptrdiff_t>(i) * ow;
      const double* r = tmp.data() + static_cast<std::ptrdiff_t>(wrap(i + 1, h)) * ow;
      for (int x = 0; x < ow; ++x) dst[x] = 2.0 * (kBinomial[1] * c[x] + kBinomial[3] * r[x]);
    }
  }
}

template <bool Parallel>
void resize_bilinear_impl(std::span<const double> in, int h, int w, std::span<double> out, int oh, int ow) {
  std::vector<int> x0(static_cast<std::size_t>(ow)), x1(static_cast<std::size_t>(ow));
  std::vector<double> fx(static_cast<std::size_t>(ow));
  for (int x = 0; x < ow; ++x) {
    const double sx = std::clamp((x + 0.5) * w / ow - 0.5, 0.0, static_cast<double>(w - 1));
    x0[x] = static_cast<int>(std::floor(sx));
    x1[x] = std::min(x0[x] + 1, w - 1);
    fx[x] = sx - x0[x];
  }
#pragma omp parallel for schedule(static) if (Parallel)
  for (int y = 0; y < oh; ++y) {
    const double sy = std::clamp((y + 0.5) * h / oh - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - y0;
    const double* r0 = in.data() + static_cast<std::ptrdiff_t>(y0) * w;
    const double* r1 = in.data() + static_cast<std::ptrdiff_t>(y1) * w;
    double* dst = out.data() + static_cast<std::ptrdiff_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      const double top = r0[x0[x]] + fx[x] * (r0[x1[x]] - r0[x0[x]]);
      const double bot = r1[x0[x]] + fx[x] * (r1[x1[x]] - r1[x0[x]]);
      dst[x] = top + fy * (bot - top);
    }
  }
}

}  // namespace

#define IFN_DEFINE_KERNELS(NS, PAR)                                                                          \
  namespace NS {                                                                                             \
  void conv2d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,              \
                      std::span<const double> b, std::span<double> y) {                                       \
    conv2d_forward_impl<PAR>(s, x, w, b, y);                                                                 \
  }                                                                                                          \
  void conv2d_backward_input(const ConvShape& s, std::span<const double> w, std::span<const double> gy,      \
                             std::span<double> gx) {                                                         \
    conv2d_backward_input_impl<PAR>(s, w, gy, gx);                                                           \
  }                                                                                                          \
  void conv2d_backward_weight(const ConvShape& s, std::span<const double> x, std::span<const double> gy,     \
                              std::span<double> gw, std::span<double> gb) {                                  \
    conv2d_backward_weight_impl<PAR>(s, x, gy, gw, gb);                                                      \
  }                                                                                                          \
  double hs_sweep(const FlowTerms& t, double lambda, int color, std::span<double> u, std::span<double> v) {   \
    return hs_sweep_impl<PAR>(t, lambda, color, u, v);                                                       \
  }                                                                                                          \
  void pyr_down(std::span<const double> in, int h, int w, std::span<double> out) {                           \
    pyr_down_impl<PAR>(in, h, w, out);                                                                       \
  }                                                                                                          \
  void pyr_up(std::span<const double> in, int h, int w, std::span<double> out) {                             \
    pyr_up_impl<PAR>(in, h, w, out);                                                                         \
  }                                                                                                          \
  void resize_bilinear(std::span<const double> in, int h, int w, std::span<double> out, int oh, int ow) {    \
    resize_bilinear_impl<PAR>(in, h, w, out, oh, ow);                                                        \
  }                                                                                                          \
  }

IFN_DEFINE_KERNELS(serial, false)
IFN_DEFINE_KERNELS(omp, true)

#undef IFN_DEFINE_KERNELS

int thread_count() { return omp_get_max_threads(); }

}  // namespace ifn::kernels
