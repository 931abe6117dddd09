#pragma once

#include <array>
#include <vector>

#include "vetta/geom/curve.hpp"

namespace vetta::geom {

struct PolylineVessel {
  std::vector<Point4> points;  // x, y, z, r in mm; z = 0 for planar data

  /// Throws unless there are >= 2 points, all finite, with positive radii.
  void validate() const;
  double arc_length() const;
  double endpoint_distance() const;
};

double distance3(const Point4& a, const Point4& b);

struct VesselTransform {
  std::array<double, 3> translation{0, 0, 0};
  double scale_pos = 1.0;  // original = normalized * scale_pos + translation
  double scale_r = 1.0;
};

struct NormalizedVessel {
  std::vector<Point4> points;
  VesselTransform transform;
};

/// Places the first point at the origin and the last on the unit sphere,
/// and divides radii by the first radius.
NormalizedVessel normalize_vessel(const PolylineVessel& v);
Point4 denormalize_point(const Point4& p, const VesselTransform& tf);
PolylineVessel denormalize_vessel(const NormalizedVessel& v);

/// Normalized cumulative arc length at each point (0 at the start, 1 at the end).
std::vector<double> arc_parameters(const std::vector<Point4>& points);

/// Resamples at n points equally spaced in arc length, interpolating all four components.
std::vector<Point4> resample_by_arc_length(const std::vector<Point4>& points, std::size_t n);

enum class MaskMode { eval, train };

/// Endpoint mask 0.5^-0.2 * t^0.1 * (1 - t)^0.1; 1 in training mode.
double eval_mask(double t, MaskMode mode);

/// a + (b - a) t + residual * m(t), applied to all four components.
Point4 decode_curve_point(const Point4& a, const Point4& b, const Point4& residual, double t, MaskMode mode);

}  // namespace vetta::geom
