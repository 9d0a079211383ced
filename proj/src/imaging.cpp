#include "infusenet/imaging.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

namespace ifn {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::missing_file: return "missing_file";
    case Errc::malformed_header: return "malformed_header";
    case Errc::bad_maxval: return "bad_maxval";
    case Errc::truncated_payload: return "truncated_payload";
    case Errc::unwritable_path: return "unwritable_path";
    case Errc::magic_mismatch: return "magic_mismatch";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::out_of_bounds: return "out_of_bounds";
    case Errc::structure_mismatch: return "structure_mismatch";
    case Errc::non_finite: return "non_finite";
    case Errc::parse_error: return "parse_error";
    case Errc::unknown_key: return "unknown_key";
    case Errc::validation: return "validation";
    case Errc::missing_prerequisite: return "missing_prerequisite";
    case Errc::training_failure: return "training_failure";
  }
  return "unknown";
}

void validate_frame(const Image& img) {
  if (img.height < kMinFrameEdge || img.width < kMinFrameEdge) {
    throw Error(Errc::invalid_argument, "frame must be at least 8x8, got " + std::to_string(img.height) +
                                            "x" + std::to_string(img.width));
  }
  if (img.data.size() != static_cast<std::size_t>(img.height) * img.width) {
    throw Error(Errc::invalid_argument, "frame data length does not match dims");
  }
  for (double v : img.data) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw Error(Errc::invalid_argument, "frame value outside [0,1]");
    }
  }
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_file, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Parses one unsigned header token, skipping whitespace and '#' comments.
long parse_header_int(const std::vector<unsigned char>& buf, std::size_t& pos, const std::string& what) {
  for (;;) {
    while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= buf.size() || !std::isdigit(buf[pos])) {
    throw Error(Errc::malformed_header, "expected " + what);
  }
  long v = 0;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    v = v * 10 + (buf[pos] - '0');
    if (v > (1L << 30)) throw Error(Errc::malformed_header, what + " too large");
    ++pos;
  }
  return v;
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

Image load_frame(const std::filesystem::path& path) {
  const auto buf = read_all(path);
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') {
    throw Error(Errc::malformed_header, "missing P5 magic in " + path.string());
  }
  std::size_t pos = 2;
  const long width = parse_header_int(buf, pos, "width");
  const long height = parse_header_int(buf, pos, "height");
  const long maxval = parse_header_int(buf, pos, "maxval");
  if (width <= 0 || height <= 0) throw Error(Errc::malformed_header, "non-positive dims");
  if (maxval != 255) throw Error(Errc::bad_maxval, "maxval " + std::to_string(maxval));
  // exactly one whitespace byte separates the header from the raster
  if (pos >= buf.size() || !std::isspace(buf[pos])) {
    throw Error(Errc::malformed_header, "missing raster separator");
  }
  ++pos;
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (buf.size() - pos < n) {
    throw Error(Errc::truncated_payload, path.string() + ": expected " + std::to_string(n) + " bytes, found " +
                                             std::to_string(buf.size() - pos));
  }
  Image img(static_cast<int>(height), static_cast<int>(width));
  for (std::size_t i = 0; i < n; ++i) img.data[i] = buf[pos + i] / 255.0;
  return img;
}

void store_frame(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::unwritable_path, path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), [](double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0)));
  });
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::unwritable_path, path.string());
}

std::size_t TensorFile::element_count() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t d) { return a * d; });
}

void TensorFile::validate() const {
  if (dims.empty() || dims.size() > 4) {
    throw Error(Errc::invalid_argument, "tensor rank must be in [1,4]");
  }
  if (element_count() != data.size()) {
    throw Error(Errc::length_mismatch, "dims product " + std::to_string(element_count()) + " != data length " +
                                           std::to_string(data.size()));
  }
}

void store_tensor(const TensorFile& t, const std::filesystem::path& path) {
  t.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::unwritable_path, path.string());
  out.write("IFNT", 4);
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw Error(Errc::unwritable_path, path.string());
}

TensorFile load_tensor(const std::filesystem::path& path) {
  const auto buf = read_all(path);
  if (buf.size() < 8 || !std::equal(buf.begin(), buf.begin() + 4, "IFNT")) {
    throw Error(Errc::magic_mismatch, path.string());
  }
  const std::uint32_t rank = get_u32(buf.data() + 4);
  if (rank < 1 || rank > 4) throw Error(Errc::malformed_header, "rank " + std::to_string(rank));
  if (buf.size() < 8 + 4 * static_cast<std::size_t>(rank)) {
    throw Error(Errc::length_mismatch, "header truncated in " + path.string());
  }
  TensorFile t;
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(get_u32(buf.data() + 8 + 4 * i));
  const std::size_t offset = 8 + 4 * static_cast<std::size_t>(rank);
  const std::size_t n = t.element_count();
  if (buf.size() - offset != 4 * n) {
    throw Error(Errc::length_mismatch, path.string() + ": payload holds " + std::to_string(buf.size() - offset) +
                                           " bytes, dims need " + std::to_string(4 * n));
  }
  t.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(get_u32(buf.data() + offset + 4 * i));
  return t;
}

TensorFile to_tensor_file(std::span<const std::uint32_t> dims, std::span<const double> values) {
  TensorFile t;
  t.dims.assign(dims.begin(), dims.end());
  t.data.resize(values.size());
  std::transform(values.begin(), values.end(), t.data.begin(), [](double v) { return static_cast<float>(v); });
  t.validate();
  return t;
}

}  // namespace ifn
