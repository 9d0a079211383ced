#include "infusenet/magnify.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "infusenet/kernels.hpp"

namespace ifn {

namespace {

void check_structure(const LatentStack& lat) {
  if (lat.bands.empty()) throw Error(Errc::structure_mismatch, "latent stack has no bands");
  int h = lat.height, w = lat.width;
  for (const auto& b : lat.bands) {
    if (b.height != h || b.width != w || b.data.size() != static_cast<std::size_t>(h) * w) {
      throw Error(Errc::structure_mismatch, "band dims do not halve from the source dims");
    }
    h /= 2;
    w /= 2;
  }
  if (lat.residual.height != h || lat.residual.width != w ||
      lat.residual.data.size() != static_cast<std::size_t>(h) * w) {
    throw Error(Errc::structure_mismatch, "residual dims inconsistent with depth");
  }
}

bool same_structure(const LatentStack& a, const LatentStack& b) {
  return a.height == b.height && a.width == b.width && a.bands.size() == b.bands.size();
}

}  // namespace

void validate(const MagConfig& cfg) {
  if (!(cfg.alpha >= 0.0) || !std::isfinite(cfg.alpha)) throw Error(Errc::invalid_argument, "alpha must be >= 0");
  if (cfg.depth < 1) throw Error(Errc::invalid_argument, "pyramid depth must be >= 1");
}

LatentStack encode(const Image& img, int depth) {
  if (depth < 1) throw Error(Errc::invalid_argument, "pyramid depth must be >= 1");
  const int step = 1 << depth;
  if (img.height % step != 0 || img.width % step != 0) {
    throw Error(Errc::dimension_mismatch, "frame dims " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                              " not divisible by 2^" + std::to_string(depth));
  }
  LatentStack lat{img.height, img.width, {}, {}};
  std::vector<double> g = img.data;
  int h = img.height, w = img.width;
  for (int d = 0; d < depth; ++d) {
    std::vector<double> down(static_cast<std::size_t>(h / 2) * (w / 2));
    kernels::omp::pyr_down(g, h, w, down);
    std::vector<double> up(g.size());
    kernels::omp::pyr_up(down, h / 2, w / 2, up);
    Plane2D band{h, w, std::move(g)};
    for (std::size_t i = 0; i < up.size(); ++i) band.data[i] -= up[i];
    lat.bands.push_back(std::move(band));
    g = std::move(down);
    h /= 2;
    w /= 2;
  }
  lat.residual = {h, w, std::move(g)};
  return lat;
}

LatentStack manipulate(const LatentStack& onset, const LatentStack& target, double alpha) {
  if (!same_structure(onset, target)) throw Error(Errc::structure_mismatch, "latent stacks differ in structure");
  check_structure(onset);
  check_structure(target);
  LatentStack out = target;
  if (alpha == 0.0) return out;
  for (std::size_t l = 0; l < out.bands.size(); ++l) {
    auto& o = out.bands[l].data;
    const auto& a = onset.bands[l].data;
    const auto& t = target.bands[l].data;
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = t[i] + alpha * (t[i] - a[i]);
  }
  return out;
}

Plane2D reconstruct(const LatentStack& lat) {
  check_structure(lat);
  Plane2D g = lat.residual;
  for (auto it = lat.bands.rbegin(); it != lat.bands.rend(); ++it) {
    Plane2D up{it->height, it->width, std::vector<double>(it->data.size())};
    kernels::omp::pyr_up(g.data, g.height, g.width, up.data);
    for (std::size_t i = 0; i < up.data.size(); ++i) up.data[i] += it->data[i];
    g = std::move(up);
  }
  return g;
}

Image decode(const LatentStack& lat) {
  Plane2D g = reconstruct(lat);
  Image img(g.height, g.width);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    if (!std::isfinite(g.data[i])) throw Error(Errc::non_finite, "decoded value not finite");
    img.data[i] = std::clamp(g.data[i], 0.0, 1.0);
  }
  return img;
}

MagTensor resample_levels(const LatentStack& lat) {
  check_structure(lat);
  const std::size_t plane = static_cast<std::size_t>(lat.height) * lat.width;
  MagTensor t{lat.level_count(), lat.height, lat.width, std::vector<double>(lat.level_count() * plane)};
  auto write = [&](int c, const Plane2D& p) {
    std::span<double> dst(t.data.data() + c * plane, plane);
    if (p.height == lat.height && p.width == lat.width) {
      std::copy(p.data.begin(), p.data.end(), dst.begin());
    } else {
      kernels::omp::resize_bilinear(p.data, p.height, p.width, dst, lat.height, lat.width);
    }
  };
  for (int l = 0; l < lat.depth(); ++l) write(l, lat.bands[static_cast<std::size_t>(l)]);
  write(lat.depth(), lat.residual);
  return t;
}

namespace {

void check_triplet(const Image& a, const Image& b, const Image& c) {
  if (a.height != b.height || a.width != b.width || a.height != c.height || a.width != c.width) {
    throw Error(Errc::dimension_mismatch, "onset, apex and pseudo-apex frames differ in size");
  }
}

MagTensor concat(const MagTensor& first, const MagTensor& second) {
  MagTensor out{first.channels + second.channels, first.height, first.width, first.data};
  out.data.insert(out.data.end(), second.data.begin(), second.data.end());
  return out;
}

}  // namespace

MagTensor magnified_half(const LatentStack& onset_latent, const Image& target, const MagConfig& cfg, bool decoded) {
  validate(cfg);
  const LatentStack moved = manipulate(onset_latent, encode(target, cfg.depth), cfg.alpha);
  if (!decoded) return resample_levels(moved);
  Image img = decode(moved);
  return MagTensor{1, img.height, img.width, std::move(img.data)};
}

MagTensor magnified_latent_pair(const Image& onset, const Image& apex, const Image& pseudo_apex,
                                const MagConfig& cfg) {
  validate(cfg);
  check_triplet(onset, apex, pseudo_apex);
  const LatentStack base = encode(onset, cfg.depth);
  const MagTensor a = resample_levels(manipulate(base, encode(apex, cfg.depth), cfg.alpha));
  const MagTensor b = resample_levels(manipulate(base, encode(pseudo_apex, cfg.depth), cfg.alpha));
  return concat(a, b);
}

MagTensor decoded_magnified_pair(const Image& onset, const Image& apex, const Image& pseudo_apex,
                                 const MagConfig& cfg) {
  validate(cfg);
  check_triplet(onset, apex, pseudo_apex);
  const LatentStack base = encode(onset, cfg.depth);
  const Image a = decode(manipulate(base, encode(apex, cfg.depth), cfg.alpha));
  const Image b = decode(manipulate(base, encode(pseudo_apex, cfg.depth), cfg.alpha));
  return concat(MagTensor{1, a.height, a.width, a.data}, MagTensor{1, b.height, b.width, b.data});
}

TensorFile MagTensor::to_tensor() const {
  const std::uint32_t dims[] = {static_cast<std::uint32_t>(channels), static_cast<std::uint32_t>(height),
                                static_cast<std::uint32_t>(width)};
  return to_tensor_file(dims, data);
}

MagTensor MagTensor::from_tensor(const TensorFile& t) {
  t.validate();
  if (t.dims.size() != 3) throw Error(Errc::structure_mismatch, "magnified tensor must have dims (C,H,W)");
  MagTensor m{static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]), {}};
  m.data.assign(t.data.begin(), t.data.end());
  return m;
}

}  // namespace ifn
