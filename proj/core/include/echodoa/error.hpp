#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace echodoa {

/// Machine-readable failure categories. Every exception thrown by the library
/// carries one of these so callers (and the CLI) can branch without parsing text.
enum class ErrorKind {
  invalid_argument,
  scenario_out_of_window,
  missing_signal_power,
  no_echo_found,
  too_few_snapshots,
  no_intersection,
  coincident_sensors,
  singular_geometry,
  unusable_fallback,
  shape_mismatch,
  empty_dataset,
  divergence,
  aperture_violation,
  version_mismatch,
  checksum_failure,
  truncated,
  bad_magic,
  rate_mismatch,
  incompatible_checkpoint,
  non_overlapping_curves,
  io,
  config,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace echodoa
