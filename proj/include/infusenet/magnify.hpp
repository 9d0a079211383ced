#pragma once

#include <vector>

#include "infusenet/imaging.hpp"

namespace ifn {

/// One pyramid plane.
struct Plane2D {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  friend bool operator==(const Plane2D&, const Plane2D&) = default;
};

/// Laplacian-pyramid latent: band-pass planes ordered fine to coarse
/// (bands[0] has the source resolution) plus the low-pass residual.
struct LatentStack {
  int height = 0;
  int width = 0;
  std::vector<Plane2D> bands;
  Plane2D residual;

  int depth() const { return static_cast<int>(bands.size()); }
  /// Band count plus the residual.
  int level_count() const { return depth() + 1; }

  friend bool operator==(const LatentStack&, const LatentStack&) = default;
};

struct MagConfig {
  double alpha = 10.0;  // additive factor: effective motion gain is 1 + alpha
  int depth = 3;
};

void validate(const MagConfig& cfg);

/// Linear, exactly invertible pyramid encoding. Dims must be divisible by 2^depth.
LatentStack encode(const Image& img, int depth);

/// out = target + alpha * (target - onset) on every band; residual copied from target.
LatentStack manipulate(const LatentStack& onset, const LatentStack& target, double alpha);

/// Collapses the pyramid without clamping.
Plane2D reconstruct(const LatentStack& lat);

/// Collapses the pyramid and clamps to [0,1].
Image decode(const LatentStack& lat);

/// Input tensor of the magnification stream, dims (C, H, W), channel-major.
struct MagTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  TensorFile to_tensor() const;
  static MagTensor from_tensor(const TensorFile& t);
  friend bool operator==(const MagTensor&, const MagTensor&) = default;
};

/// Every level of the stack resized bilinearly to the source grid, fine to
/// coarse, residual last: depth + 1 channels.
MagTensor resample_levels(const LatentStack& lat);

/// One half of the magnification input for an already encoded onset: the
/// resampled levels of manipulate(onset, encode(target)), or with `decoded`
/// the single decoded image.
MagTensor magnified_half(const LatentStack& onset_latent, const Image& target, const MagConfig& cfg, bool decoded);

/// concat(Mag(onset, apex), Mag(onset, pseudo_apex)): both pairs go through
/// the same codec; 2 * (depth + 1) channels.
MagTensor magnified_latent_pair(const Image& onset, const Image& apex, const Image& pseudo_apex,
                                const MagConfig& cfg);

/// Same pairs, decoded back to images: 2 channels.
MagTensor decoded_magnified_pair(const Image& onset, const Image& apex, const Image& pseudo_apex,
                                 const MagConfig& cfg);

}  // namespace ifn
