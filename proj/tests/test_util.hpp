#pragma once

#include <filesystem>
#include <string>

#include <doctest.h>

#include "infusenet/error.hpp"
#include "infusenet/rng.hpp"

// Asserts that `expr` throws ifn::Error with code `errc`.
#define CHECK_ERRC(expr, errc)                                        \
  do {                                                                \
    bool thrown_ = false;                                             \
    try {                                                             \
      (void)(expr);                                                   \
    } catch (const ifn::Error& e_) {                                  \
      thrown_ = true;                                                 \
      CHECK_MESSAGE(e_.code() == (errc), "got " << e_.what());        \
    }                                                                 \
    CHECK_MESSAGE(thrown_, "expected " << ifn::errc_name(errc));      \
  } while (0)

namespace testutil {

/// Fresh empty directory under the system temp dir, unique per name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("infusenet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
