#pragma once

#include <vector>

#include "infusenet/imaging.hpp"

namespace ifn {

/// Dense displacement field between two frames (dt = one frame interval).
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> p;  // horizontal, pixels
  std::vector<double> q;  // vertical, pixels

  FlowField() = default;
  FlowField(int h, int w)
      : height(h), width(w), p(static_cast<std::size_t>(h) * w, 0.0), q(static_cast<std::size_t>(h) * w, 0.0) {}

  std::size_t size() const { return p.size(); }
};

struct FlowParams {
  double lambda = 0.01;  // smoothness weight, intensity units squared
  int iters = 400;        // red-black sweeps per warp
  double tol = 1e-6;      // stop when no component moves more than this
  int levels = 3;         // coarse-to-fine pyramid levels
  int warps = 2;          // re-linearisations per level
};

/// Optional solver telemetry. One energy trace per (level, warp)
/// linearisation, coarse to fine; each trace starts with the energy before
/// the first sweep and appends one value per red-black sweep.
struct FlowDiagnostics {
  std::vector<std::vector<double>> energy;
  int sweeps = 0;
};

/// Multi-scale Horn-Schunck flow from `onset` to `apex`.
FlowField compute_flow(const Image& onset, const Image& apex, const FlowParams& params = {},
                       FlowDiagnostics* diagnostics = nullptr);

struct StrainMap {
  int height = 0;
  int width = 0;
  std::vector<double> exx;
  std::vector<double> eyy;
  std::vector<double> exy;
  std::vector<double> magnitude;
};

/// Infinitesimal strain of the flow: central differences in the interior,
/// one-sided at the border; magnitude = sqrt(exx^2 + eyy^2 + 2 exy^2).
StrainMap compute_strain(const FlowField& flow);

/// Three planes (f_x, f_y, strain magnitude), each H x W, no rescaling.
struct OpticalFlowImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // channel-major, 3*H*W

  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  TensorFile to_tensor() const;
  static OpticalFlowImage from_tensor(const TensorFile& t);
};

OpticalFlowImage build_flow_image(const FlowField& flow, const StrainMap& strain);

/// Convenience: flow, strain, and assembly in one call.
OpticalFlowImage optical_flow_image(const Image& onset, const Image& apex, const FlowParams& params = {});

/// Bilinear warp of `img` by `flow`: out(x) = img(x + w(x)), edge clamped.
Image warp_image(const Image& img, const FlowField& flow);

}  // namespace ifn
