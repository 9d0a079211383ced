#include "infusenet/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "infusenet/kernels.hpp"

namespace ifn {

namespace {

using Plane = std::vector<double>;

// Central difference in the interior, one-sided at the two ends.
inline double diff_x(const double* row, int x, int w) {
  if (w == 1) return 0.0;
  if (x == 0) return row[1] - row[0];
  if (x == w - 1) return row[w - 1] - row[w - 2];
  return 0.5 * (row[x + 1] - row[x - 1]);
}

inline double diff_y(const double* plane, int y, int x, int h, int w) {
  if (h == 1) return 0.0;
  const auto at = [&](int yy) { return plane[static_cast<std::size_t>(yy) * w + x]; };
  if (y == 0) return at(1) - at(0);
  if (y == h - 1) return at(h - 1) - at(h - 2);
  return 0.5 * (at(y + 1) - at(y - 1));
}

Plane gradient_x(const Plane& f, int h, int w) {
  Plane g(f.size());
  for (int y = 0; y < h; ++y) {
    const double* row = f.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) g[static_cast<std::size_t>(y) * w + x] = diff_x(row, x, w);
  }
  return g;
}

Plane gradient_y(const Plane& f, int h, int w) {
  Plane g(f.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) g[static_cast<std::size_t>(y) * w + x] = diff_y(f.data(), y, x, h, w);
  }
  return g;
}

double sample_bilinear(const Plane& f, int h, int w, double sy, double sx) {
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  const auto at = [&](int yy, int xx) { return f[static_cast<std::size_t>(yy) * w + xx]; };
  const double top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
  const double bot = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
  return top + fy * (bot - top);
}

Plane warp_plane(const Plane& f, int h, int w, const Plane& u, const Plane& v) {
  Plane out(f.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      out[i] = sample_bilinear(f, h, w, y + v[i], x + u[i]);
    }
  }
  return out;
}

// Binomial blur with clamped borders, then bilinear decimation to ceil(h/2) x ceil(w/2).
Plane shrink(const Plane& f, int h, int w, int oh, int ow) {
  constexpr std::array<double, 5> taps = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  Plane tmp(f.size()), blurred(f.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -2; k <= 2; ++k) s += taps[k + 2] * f[static_cast<std::size_t>(y) * w + std::clamp(x + k, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -2; k <= 2; ++k) s += taps[k + 2] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      blurred[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  Plane out(static_cast<std::size_t>(oh) * ow);
  kernels::omp::resize_bilinear(blurred, h, w, out, oh, ow);
  return out;
}

struct Level {
  int h, w;
  Plane a, b;
};

double linearised_energy(const kernels::FlowTerms& t, double lambda, const Plane& u, const Plane& v) {
  const int h = t.height, w = t.width;
  double data = 0.0, smooth = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double r = t.ix[i] * u[i] + t.iy[i] * v[i] + t.c[i];
      data += r * r;
      if (x + 1 < w) smooth += (u[i] - u[i + 1]) * (u[i] - u[i + 1]) + (v[i] - v[i + 1]) * (v[i] - v[i + 1]);
      if (y + 1 < h) smooth += (u[i] - u[i + w]) * (u[i] - u[i + w]) + (v[i] - v[i + w]) * (v[i] - v[i + w]);
    }
  }
  return data + lambda * smooth;
}

}  // namespace

FlowField compute_flow(const Image& onset, const Image& apex, const FlowParams& params,
                       FlowDiagnostics* diagnostics) {
  if (onset.height != apex.height || onset.width != apex.width) {
    throw Error(Errc::dimension_mismatch, "onset and apex frames differ in size");
  }
  if (!(params.lambda > 0.0)) throw Error(Errc::invalid_argument, "lambda must be positive");
  if (params.levels < 1 || params.iters < 1 || params.warps < 1 || params.tol < 0.0) {
    throw Error(Errc::invalid_argument, "levels, iters and warps must be >= 1, tol >= 0");
  }

  std::vector<Level> pyramid{{onset.height, onset.width, onset.data, apex.data}};
  while (static_cast<int>(pyramid.size()) < params.levels) {
    const Level& fine = pyramid.back();
    const int oh = (fine.h + 1) / 2, ow = (fine.w + 1) / 2;
    if (std::min(oh, ow) < kMinFrameEdge) break;
    pyramid.push_back({oh, ow, shrink(fine.a, fine.h, fine.w, oh, ow), shrink(fine.b, fine.h, fine.w, oh, ow)});
  }

  Plane u, v;
  for (int li = static_cast<int>(pyramid.size()) - 1; li >= 0; --li) {
    const Level& lv = pyramid[static_cast<std::size_t>(li)];
    const std::size_t n = static_cast<std::size_t>(lv.h) * lv.w;
    if (u.empty()) {
      u.assign(n, 0.0);
      v.assign(n, 0.0);
    } else {
      const Level& coarse = pyramid[static_cast<std::size_t>(li) + 1];
      Plane fu(n), fv(n);
      kernels::omp::resize_bilinear(u, coarse.h, coarse.w, fu, lv.h, lv.w);
      kernels::omp::resize_bilinear(v, coarse.h, coarse.w, fv, lv.h, lv.w);
      const double sx = static_cast<double>(lv.w) / coarse.w, sy = static_cast<double>(lv.h) / coarse.h;
      for (std::size_t i = 0; i < n; ++i) {
        fu[i] *= sx;
        fv[i] *= sy;
      }
      u = std::move(fu);
      v = std::move(fv);
    }

    const Plane ga_x = gradient_x(lv.a, lv.h, lv.w), ga_y = gradient_y(lv.a, lv.h, lv.w);
    for (int warp = 0; warp < params.warps; ++warp) {
      const Plane bw = warp_plane(lv.b, lv.h, lv.w, u, v);
      const Plane gb_x = gradient_x(bw, lv.h, lv.w), gb_y = gradient_y(bw, lv.h, lv.w);
      Plane ix(n), iy(n), c(n);
      for (std::size_t i = 0; i < n; ++i) {
        ix[i] = 0.5 * (ga_x[i] + gb_x[i]);
        iy[i] = 0.5 * (ga_y[i] + gb_y[i]);
        c[i] = (bw[i] - lv.a[i]) - ix[i] * u[i] - iy[i] * v[i];
      }
      const kernels::FlowTerms terms{lv.h, lv.w, ix, iy, c};
      std::vector<double>* trace = nullptr;
      if (diagnostics) {
        diagnostics->energy.emplace_back();
        trace = &diagnostics->energy.back();
        trace->push_back(linearised_energy(terms, params.lambda, u, v));
      }
      for (int it = 0; it < params.iters; ++it) {
        const double red = kernels::omp::hs_sweep(terms, params.lambda, 0, u, v);
        const double black = kernels::omp::hs_sweep(terms, params.lambda, 1, u, v);
        if (diagnostics) {
          ++diagnostics->sweeps;
          trace->push_back(linearised_energy(terms, params.lambda, u, v));
        }
        if (std::max(red, black) <= params.tol) break;
      }
    }
  }

  FlowField flow(onset.height, onset.width);
  flow.p = std::move(u);
  flow.q = std::move(v);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (!std::isfinite(flow.p[i]) || !std::isfinite(flow.q[i])) throw Error(Errc::non_finite, "flow solver diverged");
  }
  return flow;
}

Image warp_image(const Image& img, const FlowField& flow) {
  if (img.height != flow.height || img.width != flow.width) {
    throw Error(Errc::dimension_mismatch, "image and flow differ in size");
  }
  Image out(img.height, img.width);
  out.data = warp_plane(img.data, img.height, img.width, flow.p, flow.q);
  return out;
}

StrainMap compute_strain(const FlowField& flow) {
  if (flow.p.size() != flow.size() || flow.q.size() != flow.size() ||
      flow.size() != static_cast<std::size_t>(flow.height) * flow.width) {
    throw Error(Errc::invalid_argument, "flow field planes inconsistent with dims");
  }
  const int h = flow.height, w = flow.width;
  const Plane px = gradient_x(flow.p, h, w), py = gradient_y(flow.p, h, w);
  const Plane qx = gradient_x(flow.q, h, w), qy = gradient_y(flow.q, h, w);
  StrainMap s{h, w, px, qy, Plane(flow.size()), Plane(flow.size())};
  for (std::size_t i = 0; i < flow.size(); ++i) {
    s.exy[i] = 0.5 * (py[i] + qx[i]);
    s.magnitude[i] = std::sqrt(s.exx[i] * s.exx[i] + s.eyy[i] * s.eyy[i] + 2.0 * s.exy[i] * s.exy[i]);
  }
  return s;
}

OpticalFlowImage build_flow_image(const FlowField& flow, const StrainMap& strain) {
  if (flow.height != strain.height || flow.width != strain.width || strain.magnitude.size() != flow.size()) {
    throw Error(Errc::dimension_mismatch, "flow and strain differ in size");
  }
  OpticalFlowImage img{flow.height, flow.width, {}};
  img.data.reserve(3 * flow.size());
  img.data.insert(img.data.end(), flow.p.begin(), flow.p.end());
  img.data.insert(img.data.end(), flow.q.begin(), flow.q.end());
  img.data.insert(img.data.end(), strain.magnitude.begin(), strain.magnitude.end());
  return img;
}

OpticalFlowImage optical_flow_image(const Image& onset, const Image& apex, const FlowParams& params) {
  const FlowField flow = compute_flow(onset, apex, params);
  return build_flow_image(flow, compute_strain(flow));
}

TensorFile OpticalFlowImage::to_tensor() const {
  const std::uint32_t dims[] = {3, static_cast<std::uint32_t>(height), static_cast<std::uint32_t>(width)};
  return to_tensor_file(dims, data);
}

OpticalFlowImage OpticalFlowImage::from_tensor(const TensorFile& t) {
  t.validate();
  if (t.dims.size() != 3 || t.dims[0] != 3) {
    throw Error(Errc::structure_mismatch, "optical flow image tensor must have dims (3,H,W)");
  }
  OpticalFlowImage img{static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]), {}};
  img.data.assign(t.data.begin(), t.data.end());
  return img;
}

}  // namespace ifn
