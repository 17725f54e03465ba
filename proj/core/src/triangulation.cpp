#include "echodoa/triangulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "echodoa/error.hpp"

namespace echodoa {
namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

void check_measurement(const RangeMeasurement& m) {
  require(std::isfinite(m.sensor.x) && std::isfinite(m.sensor.y), ErrorKind::invalid_argument,
          "RangeMeasurement: non-finite sensor position");
  require(std::isfinite(m.range_m) && m.range_m > 0.0, ErrorKind::invalid_argument,
          "RangeMeasurement: range must be > 0");
  require(std::isfinite(m.sigma_r) && m.sigma_r >= 0.0, ErrorKind::invalid_argument,
          "RangeMeasurement: sigma_r must be >= 0");
}

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

double ErrorEllipse::sigma_x() const { return std::sqrt(std::max(cov_xx, 0.0)); }
double ErrorEllipse::sigma_y() const { return std::sqrt(std::max(cov_yy, 0.0)); }

std::vector<Point2> intersect_two_circles(const RangeMeasurement& m1, const RangeMeasurement& m2) {
  check_measurement(m1);
  check_measurement(m2);
  const double dx = m2.sensor.x - m1.sensor.x;
  const double dy = m2.sensor.y - m1.sensor.y;
  const double d = std::hypot(dx, dy);
  const double scale = std::max({m1.range_m, m2.range_m, std::abs(m1.sensor.x), std::abs(m1.sensor.y)});
  require(d > 1e-12 * std::max(scale, 1.0), ErrorKind::coincident_sensors,
          "intersect_two_circles: sensors coincide");

  const double r1 = m1.range_m;
  const double r2 = m2.range_m;
  const double along = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
  double h2 = r1 * r1 - along * along;
  const double tol = 1e-12 * std::max(r1 * r1, r2 * r2);
  require(h2 >= -tol, ErrorKind::no_intersection,
          "intersect_two_circles: circles do not intersect");
  // Within the tolerance the circles are tangent: one point.
  const double h = h2 <= tol ? 0.0 : std::sqrt(h2);

  const double ux = dx / d, uy = dy / d;
  const Point2 base{m1.sensor.x + along * ux, m1.sensor.y + along * uy};
  if (h == 0.0) return {base};
  Point2 p{base.x - h * uy, base.y + h * ux};
  Point2 q{base.x + h * uy, base.y - h * ux};
  if (q.y > p.y || (q.y == p.y && q.x > p.x)) std::swap(p, q);
  return {p, q};
}

ErrorEllipse ellipse_from_covariance(double cov_xx, double cov_xy, double cov_yy) {
  const double mean = 0.5 * (cov_xx + cov_yy);
  const double half_diff = 0.5 * (cov_xx - cov_yy);
  const double radius = std::hypot(half_diff, cov_xy);
  ErrorEllipse e;
  e.major = std::sqrt(std::max(mean + radius, 0.0));
  e.minor = std::sqrt(std::max(mean - radius, 0.0));
  double angle = 0.5 * std::atan2(2.0 * cov_xy, cov_xx - cov_yy) * kDegPerRad;
  if (angle <= -90.0) angle += 180.0;
  e.orientation_deg = angle;
  e.cov_xx = cov_xx;
  e.cov_xy = cov_xy;
  e.cov_yy = cov_yy;
  return e;
}

ErrorEllipse dilution_ellipse(const RangeMeasurement& m1, const RangeMeasurement& m2, Point2 point) {
  check_measurement(m1);
  check_measurement(m2);
  const double d1 = distance(point, m1.sensor);
  const double d2 = distance(point, m2.sensor);
  require(d1 > 0.0 && d2 > 0.0, ErrorKind::singular_geometry,
          "dilution_ellipse: point coincides with a sensor");
  // J rows: unit lines of sight sensor -> point
  const double a = (point.x - m1.sensor.x) / d1, b = (point.y - m1.sensor.y) / d1;
  const double c = (point.x - m2.sensor.x) / d2, d = (point.y - m2.sensor.y) / d2;
  const double det = a * d - b * c;
  require(std::abs(det) > 1e-12, ErrorKind::singular_geometry,
          "dilution_ellipse: lines of sight are parallel");
  // J^-1 = [[d, -b], [-c, a]] / det
  const double s1 = m1.sigma_r * m1.sigma_r;
  const double s2 = m2.sigma_r * m2.sigma_r;
  const double i00 = d / det, i01 = -b / det, i10 = -c / det, i11 = a / det;
  const double cxx = i00 * i00 * s1 + i01 * i01 * s2;
  const double cxy = i00 * i10 * s1 + i01 * i11 * s2;
  const double cyy = i10 * i10 * s1 + i11 * i11 * s2;
  return ellipse_from_covariance(cxx, cxy, cyy);
}

PositionFix triangulate(const RangeMeasurement& m1, const RangeMeasurement& m2) {
  const auto points = intersect_two_circles(m1, m2);
  PositionFix fix;
  fix.position = points.front();
  fix.ellipse = dilution_ellipse(m1, m2, fix.position);
  fix.source = FixSource::triangulation;
  fix.chosen_doa_deg = std::atan2(fix.position.x - 0.5 * (m1.sensor.x + m2.sensor.x),
                                  fix.position.y - 0.5 * (m1.sensor.y + m2.sensor.y)) *
                       kDegPerRad;
  return fix;
}

PositionFix fuse_doa_with_ranges(const DoaEstimate& doa, std::span<const RangeMeasurement> ranges,
                                 const FusionOptions& options) {
  require(!ranges.empty() && ranges.size() <= 2, ErrorKind::invalid_argument,
          "fuse_doa_with_ranges: need one or two range measurements");
  for (const auto& m : ranges) check_measurement(m);
  require(std::isfinite(options.sigma_theta_deg) && options.sigma_theta_deg >= 0.0 &&
              options.sigma_theta_deg < 90.0,
          ErrorKind::invalid_argument, "fuse_doa_with_ranges: sigma_theta_deg must be in [0, 90)");

  std::optional<Point2> crossing;
  if (ranges.size() == 2) {
    try {
      crossing = intersect_two_circles(ranges[0], ranges[1]).front();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::no_intersection) throw;
    }
  }

  if (!doa.converged()) {
    require(crossing.has_value(), ErrorKind::unusable_fallback,
            "fuse_doa_with_ranges: DoA fell back and the ranges do not intersect");
    return triangulate(ranges[0], ranges[1]);
  }

  Point2 origin{};
  double mean_range = 0.0;
  double sigma_sq = 0.0;
  for (const auto& m : ranges) {
    origin.x += m.sensor.x;
    origin.y += m.sensor.y;
    mean_range += m.range_m;
    sigma_sq += m.sigma_r * m.sigma_r;
  }
  const auto count = static_cast<double>(ranges.size());
  origin.x /= count;
  origin.y /= count;
  mean_range /= count;
  const double sigma_r = std::sqrt(sigma_sq / count);

  auto ray_point = [&](double theta_deg) {
    const double t = theta_deg / kDegPerRad;
    return Point2{origin.x + mean_range * std::sin(t), origin.y + mean_range * std::cos(t)};
  };

  double theta = doa.angle_deg;
  if (doa.ambiguity.size() > 1) {
    if (crossing) {
      double best = std::numeric_limits<double>::infinity();
      for (double candidate : doa.ambiguity) {
        const double dist = distance(ray_point(candidate), *crossing);
        if (dist < best) {
          best = dist;
          theta = candidate;
        }
      }
    } else {
      theta = *std::min_element(doa.ambiguity.begin(), doa.ambiguity.end(),
                                [](double x, double y) { return std::abs(x) < std::abs(y); });
    }
  }

  PositionFix fix;
  fix.position = ray_point(theta);
  fix.source = FixSource::fused;
  fix.chosen_doa_deg = theta;

  const double radial = sigma_r / std::sqrt(count);
  const double transverse = mean_range * std::tan(options.sigma_theta_deg / kDegPerRad);
  // radial unit vector (sin t, cos t), transverse (cos t, -sin t)
  const double t = theta / kDegPerRad;
  const double rx = std::sin(t), ry = std::cos(t);
  const double tx = std::cos(t), ty = -std::sin(t);
  const double vr = radial * radial, vt = transverse * transverse;
  fix.ellipse = ellipse_from_covariance(vr * rx * rx + vt * tx * tx, vr * rx * ry + vt * tx * ty,
                                        vr * ry * ry + vt * ty * ty);
  return fix;
}

PositionFix fuse_doa_with_ranges(const DoaEstimate& doa, const RangeMeasurement& m1,
                                 const RangeMeasurement& m2, const FusionOptions& options) {
  const RangeMeasurement both[] = {m1, m2};
  return fuse_doa_with_ranges(doa, std::span<const RangeMeasurement>(both), options);
}

}  // namespace echodoa
