#pragma once

// Two-sensor obstacle localization: circle intersection, linearized precision
// dilution, and fusion of a DoA ray with the measured ranges.

#include <span>
#include <vector>

#include "echodoa/doa_estimate.hpp"

namespace echodoa {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Sensor position in the vehicle plane (meters).
using SensorPose = Point2;

struct RangeMeasurement {
  SensorPose sensor;
  double range_m = 0.0;
  double sigma_r = 0.0;
};

struct ErrorEllipse {
  double major = 0.0;  ///< semi-axis, meters
  double minor = 0.0;
  double orientation_deg = 0.0;  ///< major axis angle from +x, in (-90, 90]
  /// Position covariance the axes came from.
  double cov_xx = 0.0, cov_xy = 0.0, cov_yy = 0.0;

  double sigma_x() const;
  double sigma_y() const;
};

enum class FixSource { triangulation, fused };

struct PositionFix {
  Point2 position;
  ErrorEllipse ellipse;
  FixSource source = FixSource::triangulation;
  double chosen_doa_deg = 0.0;
};

/// 0, 1 or 2 points, forward (larger y) first. Throws no_intersection or
/// coincident_sensors.
std::vector<Point2> intersect_two_circles(const RangeMeasurement& m1, const RangeMeasurement& m2);

/// sigma^2 (J^T J)^-1 generalized to per-sensor sigmas: J^-1 diag(s1^2, s2^2) J^-T,
/// where J's rows are unit lines of sight from each sensor to `point`.
ErrorEllipse dilution_ellipse(const RangeMeasurement& m1, const RangeMeasurement& m2, Point2 point);

/// Ellipse from a 2x2 covariance.
ErrorEllipse ellipse_from_covariance(double cov_xx, double cov_xy, double cov_yy);

struct FusionOptions {
  double sigma_theta_deg = 1.0;
};

/// Places the obstacle on the DoA ray from the sensors' midpoint at the mean
/// range. Ambiguous DoAs resolve to the member closest to the forward circle
/// intersection (or the smallest |angle| without one). A fallback DoA degrades
/// to plain triangulation; without an intersection that throws unusable_fallback.
PositionFix fuse_doa_with_ranges(const DoaEstimate& doa, std::span<const RangeMeasurement> ranges,
                                 const FusionOptions& options = {});
PositionFix fuse_doa_with_ranges(const DoaEstimate& doa, const RangeMeasurement& m1,
                                 const RangeMeasurement& m2, const FusionOptions& options = {});

/// Forward intersection with its dilution ellipse.
PositionFix triangulate(const RangeMeasurement& m1, const RangeMeasurement& m2);

}  // namespace echodoa
