#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "infusenet/imaging.hpp"
#include "test_util.hpp"

using namespace ifn;

namespace {

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("load_frame maps bytes to byte/255") {
  const auto dir = testutil::scratch_dir("pgm_bytes");
  write_bytes(dir / "a.pgm", std::string("P5\n2 2\n255\n") + std::string{'\x00', '\xff', '\x80', '\x40'});
  const Image img = load_frame(dir / "a.pgm");
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 2);
  CHECK(img.data[0] == 0.0);
  CHECK(img.data[1] == 1.0);
  CHECK(img.data[2] == 128.0 / 255.0);
  CHECK(img.data[3] == 64.0 / 255.0);
}

TEST_CASE("all-zero payload loads as zeros") {
  const auto dir = testutil::scratch_dir("pgm_zero");
  write_bytes(dir / "z.pgm", std::string("P5\n3 2\n255\n") + std::string(6, '\0'));
  const Image img = load_frame(dir / "z.pgm");
  CHECK(img.data == std::vector<double>(6, 0.0));
}

TEST_CASE("PGM errors") {
  const auto dir = testutil::scratch_dir("pgm_errors");
  write_bytes(dir / "short.pgm", std::string("P5\n4 4\n255\n") + std::string(8, '\x10'));
  CHECK_ERRC(load_frame(dir / "short.pgm"), Errc::truncated_payload);
  write_bytes(dir / "p2.pgm", "P2\n2 2\n255\n0 0 0 0\n");
  CHECK_ERRC(load_frame(dir / "p2.pgm"), Errc::malformed_header);
  write_bytes(dir / "max.pgm", std::string("P5\n1 1\n65535\n") + std::string(2, '\0'));
  CHECK_ERRC(load_frame(dir / "max.pgm"), Errc::bad_maxval);
  CHECK_ERRC(load_frame(dir / "absent.pgm"), Errc::missing_file);
  CHECK_ERRC(store_frame(Image(2, 2), dir / "no" / "such" / "dir.pgm"), Errc::unwritable_path);
}

TEST_CASE("PGM round trips are identities on 8-bit values") {
  const auto dir = testutil::scratch_dir("pgm_roundtrip");
  Rng rng(7);
  Image img(5, 9);
  for (auto& v : img.data) v = static_cast<double>(rng.uniform_int(0, 255)) / 255.0;
  store_frame(img, dir / "a.pgm");
  CHECK(load_frame(dir / "a.pgm") == img);

  const std::string bytes = read_bytes(dir / "a.pgm");
  CHECK(bytes.substr(0, 11) == "P5\n9 5\n255\n");
  store_frame(load_frame(dir / "a.pgm"), dir / "b.pgm");
  CHECK(read_bytes(dir / "b.pgm") == bytes);
}

TEST_CASE("store_frame clamps and rounds") {
  const auto dir = testutil::scratch_dir("pgm_clamp");
  store_frame(Image(1, 3, std::vector<double>{-0.5, 1.5, 0.5}), dir / "c.pgm");
  const Image back = load_frame(dir / "c.pgm");
  CHECK(back.data[0] == 0.0);
  CHECK(back.data[1] == 1.0);
  CHECK(back.data[2] == 128.0 / 255.0);
}

TEST_CASE("tensor round trips") {
  const auto dir = testutil::scratch_dir("ifnt");
  SUBCASE("rank 1") {
    TensorFile t{{1}, {1.5f}};
    store_tensor(t, dir / "r1.ifnt");
    CHECK(load_tensor(dir / "r1.ifnt") == t);
    CHECK(std::filesystem::file_size(dir / "r1.ifnt") == 4 + 4 + 4 + 4);
  }
  SUBCASE("rank 3 sequential") {
    TensorFile t{{3, 4, 4}, {}};
    for (int i = 0; i < 48; ++i) t.data.push_back(static_cast<float>(i));
    store_tensor(t, dir / "r3.ifnt");
    const TensorFile back = load_tensor(dir / "r3.ifnt");
    CHECK(back.dims == t.dims);
    CHECK(back.data == t.data);
  }
  SUBCASE("bit exact for special finite values") {
    TensorFile t{{2, 3}, {-0.0f, 0.0f, std::numeric_limits<float>::denorm_min(), std::numeric_limits<float>::max(),
                          -std::numeric_limits<float>::lowest(), 1e-30f}};
    store_tensor(t, dir / "s.ifnt");
    const TensorFile back = load_tensor(dir / "s.ifnt");
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      CHECK(std::bit_cast<std::uint32_t>(back.data[i]) == std::bit_cast<std::uint32_t>(t.data[i]));
    }
  }
}

TEST_CASE("tensor layout is little-endian IFNT") {
  const auto dir = testutil::scratch_dir("ifnt_layout");
  store_tensor(TensorFile{{2}, {1.0f, -2.0f}}, dir / "t.ifnt");
  const std::string b = read_bytes(dir / "t.ifnt");
  REQUIRE(b.size() == 4 + 4 + 4 + 8);
  CHECK(b.substr(0, 4) == "IFNT");
  CHECK(b.substr(4, 4) == std::string{1, 0, 0, 0});
  CHECK(b.substr(8, 4) == std::string{2, 0, 0, 0});
  float f = 0;
  std::memcpy(&f, b.data() + 16, 4);
  CHECK(f == -2.0f);
}

TEST_CASE("tensor file errors") {
  const auto dir = testutil::scratch_dir("ifnt_errors");
  store_tensor(TensorFile{{2, 2}, {1, 2, 3, 4}}, dir / "ok.ifnt");
  std::string b = read_bytes(dir / "ok.ifnt");
  write_bytes(dir / "short.ifnt", b.substr(0, b.size() - 4));
  CHECK_ERRC(load_tensor(dir / "short.ifnt"), Errc::length_mismatch);
  std::string bad = b;
  bad[0] = 'X';
  write_bytes(dir / "magic.ifnt", bad);
  CHECK_ERRC(load_tensor(dir / "magic.ifnt"), Errc::magic_mismatch);
  CHECK_ERRC(store_tensor(TensorFile{{2, 2}, {1, 2, 3}}, dir / "x.ifnt"), Errc::length_mismatch);
  CHECK_ERRC(load_tensor(dir / "absent.ifnt"), Errc::missing_file);
}

TEST_CASE("validate_frame") {
  CHECK_NOTHROW(validate_frame(Image(8, 8, 0.5)));
  CHECK_ERRC(validate_frame(Image(7, 8, 0.5)), Errc::invalid_argument);
  Image bad(8, 8, 0.5);
  bad.data[3] = std::nan("");
  CHECK_ERRC(validate_frame(bad), Errc::invalid_argument);
  bad.data[3] = 1.01;
  CHECK_ERRC(validate_frame(bad), Errc::invalid_argument);
}
