#include "echodoa/error.hpp"

namespace echodoa {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::scenario_out_of_window: return "scenario_out_of_window";
    case ErrorKind::missing_signal_power: return "missing_signal_power";
    case ErrorKind::no_echo_found: return "no_echo_found";
    case ErrorKind::too_few_snapshots: return "too_few_snapshots";
    case ErrorKind::no_intersection: return "no_intersection";
    case ErrorKind::coincident_sensors: return "coincident_sensors";
    case ErrorKind::singular_geometry: return "singular_geometry";
    case ErrorKind::unusable_fallback: return "unusable_fallback";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::empty_dataset: return "empty_dataset";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::aperture_violation: return "aperture_violation";
    case ErrorKind::version_mismatch: return "version_mismatch";
    case ErrorKind::checksum_failure: return "checksum_failure";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::bad_magic: return "bad_magic";
    case ErrorKind::rate_mismatch: return "rate_mismatch";
    case ErrorKind::incompatible_checkpoint: return "incompatible_checkpoint";
    case ErrorKind::non_overlapping_curves: return "non_overlapping_curves";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

}  // namespace echodoa
