#pragma once

#include <string_view>
#include <vector>

namespace echodoa {

enum class DoaStatus { converged, fallback };

std::string_view to_string(DoaStatus status) noexcept;

/// Angle estimate shared by every estimator. A fallback always reports 0 deg.
struct DoaEstimate {
  double angle_deg = 0.0;
  DoaStatus status = DoaStatus::fallback;
  /// Angles indistinguishable from angle_deg for the array (always contains it).
  std::vector<double> ambiguity{0.0};
  double prominence = 0.0;

  static DoaEstimate fallback() { return {}; }
  bool converged() const noexcept { return status == DoaStatus::converged; }
};

}  // namespace echodoa
