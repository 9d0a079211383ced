#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "infusenet/error.hpp"

namespace ifn {

/// Single-channel intensity field, row-major, values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
  Image(int h, int w, std::vector<double> values) : height(h), width(w), data(std::move(values)) {}

  std::size_t size() const { return data.size(); }
  double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Smallest frame edge accepted by the motion stages.
inline constexpr int kMinFrameEdge = 8;

/// Throws Errc::invalid_argument unless `img` is a valid pipeline frame:
/// both edges >= kMinFrameEdge, data length consistent, values finite in [0,1].
void validate_frame(const Image& img);

/// Reads an 8-bit binary PGM (P5, maxval 255). Pixels map to byte/255.
Image load_frame(const std::filesystem::path& path);

/// Writes an 8-bit binary PGM; values are clamped to [0,1] and rounded.
void store_frame(const Image& img, const std::filesystem::path& path);

/// Rank 1-4 float32 tensor, row-major.
struct TensorFile {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
  void validate() const;

  friend bool operator==(const TensorFile&, const TensorFile&) = default;
};

/// On-disk layout: "IFNT", u32 rank, rank x u32 dims, then float32 payload,
/// all little-endian.
void store_tensor(const TensorFile& t, const std::filesystem::path& path);
TensorFile load_tensor(const std::filesystem::path& path);

TensorFile to_tensor_file(std::span<const std::uint32_t> dims, std::span<const double> values);

}  // namespace ifn
