#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "infusenet/flow.hpp"
#include "infusenet/imaging.hpp"

namespace ifn {

inline constexpr int kNumAus = 12;

/// AU numbers in label-vector order.
inline constexpr std::array<int, kNumAus> kAuNumbers = {1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17};

/// Share of samples carrying each AU in the reference composite corpus, percent.
inline constexpr std::array<double, kNumAus> kReferenceAuPercent = {12, 11, 28, 5, 2, 10, 5, 3, 7, 11, 2, 3};

/// Number of AUs in the upper face group (AU1..AU9); the rest are lower face.
inline constexpr int kUpperFaceAus = 7;

using AuLabels = std::array<std::uint8_t, kNumAus>;

struct NoiseSpec {
  double illumination_drift = 0.0;  // peak-to-peak amplitude of a per-frame linear gradient
  double artefact_level = 0.0;      // peak amplitude of scattered speckle patches
  double sensor_sigma = 0.0;        // i.i.d. Gaussian noise std

  void validate() const;
};

struct TextureSpec {
  double base_level = 0.5;
  double contrast = 0.3;
  double frequency = 0.15;  // cycles per pixel of the region gratings
};

/// Axis-aligned region support, half-open.
struct Region {
  int y0, y1, x0, x1;
  bool contains(int y, int x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
  int area() const { return (y1 - y0) * (x1 - x0); }
};

/// The 12 AU regions of an HxW face proxy: 4 rows (brows, eyes, nose, mouth)
/// by 3 columns, in label-vector order.
std::array<Region, kNumAus> au_regions(int height, int width);

/// Unit motion direction of each AU region (dx, dy).
std::array<double, 2> au_direction(int au_index);

struct SequenceSpec {
  int height = 64;
  int width = 64;
  int num_frames = 16;
  int apex_index = 8;
  AuLabels au_labels{};
  double displacement_px = 0.5;
  NoiseSpec noise;
  TextureSpec texture;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sequence {
  std::vector<Image> frames;
  FlowField apex_flow;  // ground truth onset -> apex
};

/// Renders a face-proxy sequence. Active regions translate along their AU
/// direction with a raised-cosine ramp that peaks at `apex_index`.
Sequence gen_sequence(const SequenceSpec& spec);

/// Adds illumination gradient, speckle patches and sensor noise, then clamps to [0,1].
Image inject_artefacts(const Image& img, const NoiseSpec& noise, std::uint64_t seed);

struct DatabaseSpec {
  std::string name;
  int samples = 40;
  TextureSpec texture;
  NoiseSpec noise;
  double displacement_min = 0.3;
  double displacement_max = 1.0;
};

struct CorpusConfig {
  int height = 64;
  int width = 64;
  int num_frames = 16;
  int apex_min = 5;
  int apex_max = 9;
  bool class_distribution = true;
  std::array<double, kNumAus> class_percent = kReferenceAuPercent;
  double co_occurrence = 0.25;
  std::vector<DatabaseSpec> databases = default_databases();

  static std::vector<DatabaseSpec> default_databases();
  void validate() const;
};

struct Sample {
  std::string sample_id;
  std::string database_id;
  std::string onset_path;  // relative to the manifest directory
  std::string apex_path;
  int apex_index = 0;
  int num_frames = 0;
  AuLabels au_labels{};
};

struct Manifest {
  std::filesystem::path root;  // directory the relative paths resolve against
  std::vector<Sample> samples;

  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
  /// Path of frame `index` of a sample; frames live beside the onset frame.
  std::filesystem::path frame_path(const Sample& s, int index) const;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j, const std::filesystem::path& root);
  void save(const std::filesystem::path& file) const;
  static Manifest load(const std::filesystem::path& file);
};

std::string frame_file_name(int index);

/// AU label vectors for `count` samples. In class-distribution mode the
/// primary AU of each sample is allocated by largest-remainder quotas of
/// `class_percent`; otherwise quotas are uniform. Selected primaries pick up
/// an anatomical partner AU with probability `co_occurrence`.
std::vector<AuLabels> allocate_labels(const CorpusConfig& cfg, int count, std::uint64_t seed);

/// Writes every sample's frames plus manifest.json under `out_dir`.
Manifest gen_corpus(const CorpusConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace ifn
