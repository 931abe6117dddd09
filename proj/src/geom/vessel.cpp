#include "vetta/geom/vessel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vetta::geom {

double distance3(const Point4& a, const Point4& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void PolylineVessel::validate() const {
  if (points.size() < 2) throw std::invalid_argument("vessel: need at least 2 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (double c : points[i])
      if (!std::isfinite(c)) throw std::invalid_argument("vessel: non-finite value at point " + std::to_string(i));
    if (!(points[i][3] > 0)) throw std::invalid_argument("vessel: non-positive radius at point " + std::to_string(i));
  }
}

double PolylineVessel::arc_length() const {
  double s = 0;
  for (std::size_t i = 1; i < points.size(); ++i) s += distance3(points[i - 1], points[i]);
  return s;
}

double PolylineVessel::endpoint_distance() const {
  return points.size() < 2 ? 0.0 : distance3(points.front(), points.back());
}

NormalizedVessel normalize_vessel(const PolylineVessel& v) {
  v.validate();
  const Point4& a = v.points.front();
  const double d = v.endpoint_distance();
  if (!(d > 0)) throw std::invalid_argument("normalize_vessel: coincident endpoints");
  NormalizedVessel out;
  out.transform.translation = {a[0], a[1], a[2]};
  out.transform.scale_pos = d;
  out.transform.scale_r = a[3];
  out.points.reserve(v.points.size());
  for (const auto& p : v.points)
    out.points.push_back({(p[0] - a[0]) / d, (p[1] - a[1]) / d, (p[2] - a[2]) / d, p[3] / a[3]});
  return out;
}

Point4 denormalize_point(const Point4& p, const VesselTransform& tf) {
  return {p[0] * tf.scale_pos + tf.translation[0], p[1] * tf.scale_pos + tf.translation[1],
          p[2] * tf.scale_pos + tf.translation[2], p[3] * tf.scale_r};
}

PolylineVessel denormalize_vessel(const NormalizedVessel& v) {
  PolylineVessel out;
  out.points.reserve(v.points.size());
  for (const auto& p : v.points) out.points.push_back(denormalize_point(p, v.transform));
  return out;
}

std::vector<double> arc_parameters(const std::vector<Point4>& points) {
  std::vector<double> s(points.size(), 0.0);
  for (std::size_t i = 1; i < points.size(); ++i) s[i] = s[i - 1] + distance3(points[i - 1], points[i]);
  const double total = s.empty() ? 0.0 : s.back();
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = total > 0 ? s[i] / total : (s.size() > 1 ? static_cast<double>(i) / (s.size() - 1) : 0.0);
  if (!s.empty()) s.back() = 1.0;
  return s;
}

std::vector<Point4> resample_by_arc_length(const std::vector<Point4>& points, std::size_t n) {
  if (points.size() < 2 || n < 2) throw std::invalid_argument("resample: need >= 2 input and output points");
  const auto s = arc_parameters(points);
  std::vector<Point4> out(n);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    while (seg + 2 < points.size() && s[seg + 1] < t) ++seg;
    const double span = s[seg + 1] - s[seg];
    const double w = span > 0 ? std::clamp((t - s[seg]) / span, 0.0, 1.0) : 0.0;
    for (int c = 0; c < 4; ++c) out[i][c] = points[seg][c] + w * (points[seg + 1][c] - points[seg][c]);
  }
  out.front() = points.front();
  out.back() = points.back();
  return out;
}

double eval_mask(double t, MaskMode mode) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("eval_mask: t outside [0, 1]");
  if (mode == MaskMode::train) return 1.0;
  return std::pow(0.5, -0.2) * std::pow(t, 0.1) * std::pow(1.0 - t, 0.1);
}

Point4 decode_curve_point(const Point4& a, const Point4& b, const Point4& residual, double t, MaskMode mode) {
  const double m = eval_mask(t, mode);
  Point4 out;
  for (int c = 0; c < 4; ++c) out[c] = a[c] + (b[c] - a[c]) * t + residual[c] * m;
  if (mode == MaskMode::eval) {
    // (b - a) * 1 + a can differ from b by one rounding step.
    if (t == 0.0) out = a;
    if (t == 1.0) out = b;
  }
  return out;
}

}  // namespace vetta::geom
