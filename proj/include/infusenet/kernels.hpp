#pragma once

#include <span>

// Data-parallel inner loops shared by flow, magnify and autonet.
//
// Every kernel exists twice: `serial` is the reference path kept for tests
// and benchmarks, `omp` distributes the outer loop with OpenMP. Both run the
// same per-row / per-plane body, so results are bit-identical regardless of
// thread count. Reductions use fixed-width lane accumulators combined in a
// fixed order.

namespace ifn::kernels {

/// NCHW convolution geometry: stride 1, odd square kernel, zero padding k/2.
struct ConvShape {
  int batch = 1;
  int in_channels = 1;
  int out_channels = 1;
  int height = 1;
  int width = 1;
  int kernel = 3;
};

/// Horn-Schunck linearised data term at one pyramid level. `ix`, `iy` are
/// the spatial derivatives, `c` folds the temporal residual and the flow the
/// linearisation was taken around: r = ix*u + iy*v + c.
struct FlowTerms {
  int height = 0;
  int width = 0;
  std::span<const double> ix;
  std::span<const double> iy;
  std::span<const double> c;
};

#define IFN_KERNEL_SET                                                                                     \
  /* y = conv(x, w) + b */                                                                                 \
  void conv2d_forward(const ConvShape& s, std::span<const double> x, std::span<const double> w,            \
                      std::span<const double> b, std::span<double> y);                                      \
  /* gx += conv^T(gy, w) */                                                                                \
  void conv2d_backward_input(const ConvShape& s, std::span<const double> w, std::span<const double> gy,    \
                             std::span<double> gx);                                                        \
  /* gw += corr(x, gy), gb += sum(gy) */                                                                   \
  void conv2d_backward_weight(const ConvShape& s, std::span<const double> x, std::span<const double> gy,   \
                              std::span<double> gw, std::span<double> gb);                                 \
  /* One red-black Gauss-Seidel half sweep over pixels with (x+y)%2 == color. Returns max |change|. */     \
  double hs_sweep(const FlowTerms& t, double lambda, int color, std::span<double> u, std::span<double> v); \
  /* 5-tap binomial blur then 2x decimation, periodic borders. out is (h/2)x(w/2). */                     \
  void pyr_down(std::span<const double> in, int h, int w, std::span<double> out);                         \
  /* 2x zero-insert upsampling then 4x binomial blur, periodic borders. out is (2h)x(2w). */              \
  void pyr_up(std::span<const double> in, int h, int w, std::span<double> out);                            \
  /* Bilinear resize, pixel-centre aligned, edge clamped. */                                               \
  void resize_bilinear(std::span<const double> in, int h, int w, std::span<double> out, int oh, int ow);

namespace serial {
IFN_KERNEL_SET
}  // namespace serial

namespace omp {
IFN_KERNEL_SET
}  // namespace omp

#undef IFN_KERNEL_SET

/// Number of OpenMP threads the `omp` kernels will use.
int thread_count();

}  // namespace ifn::kernels
