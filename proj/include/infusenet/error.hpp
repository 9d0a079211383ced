#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ifn {

/// Error kinds raised across the pipeline. Tests match on the kind, not on
/// the message text.
enum class Errc {
  missing_file,
  malformed_header,
  bad_maxval,
  truncated_payload,
  unwritable_path,
  magic_mismatch,
  length_mismatch,
  invalid_argument,
  dimension_mismatch,
  out_of_bounds,
  structure_mismatch,
  non_finite,
  parse_error,
  unknown_key,
  validation,
  missing_prerequisite,
  training_failure,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ifn
