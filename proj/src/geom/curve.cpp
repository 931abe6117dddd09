#include "vetta/geom/curve.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vetta::geom {

std::vector<double> gaussian_kernel(double sigma, double truncate) {
  if (!(sigma > 0)) return {1.0};
  const auto radius = static_cast<std::size_t>(truncate * sigma + 0.5);
  std::vector<double> k(2 * radius + 1);
  double total = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-0.5 * x * x / (sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

namespace {

std::size_t reflect_index(long i, long n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

std::vector<double> gaussian_filter_reflect(std::span<const double> x, double sigma, double truncate) {
  const auto kernel = gaussian_kernel(sigma, truncate);
  const long radius = static_cast<long>(kernel.size() / 2);
  const long n = static_cast<long>(x.size());
  std::vector<double> out(x.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    double s = 0;
    for (long j = -radius; j <= radius; ++j) s += kernel[j + radius] * x[reflect_index(i + j, n)];
    out[i] = s;
  }
  return out;
}

std::vector<double> gaussian_smoothed_curvature(std::span<const double> points, std::size_t dims,
                                                double sigma) {
  if (dims == 0 || points.size() % dims != 0) throw std::invalid_argument("curvature: bad point layout");
  const std::size_t n = points.size() / dims;
  if (n < 4) throw std::invalid_argument("curvature: need at least 4 points, got " + std::to_string(n));
  // Per axis: first difference, smoothing; then second difference.
  std::vector<double> second((n - 2) * dims);
  std::vector<double> diff(n - 1);
  for (std::size_t a = 0; a < dims; ++a) {
    for (std::size_t i = 0; i + 1 < n; ++i) diff[i] = points[(i + 1) * dims + a] - points[i * dims + a];
    const auto smooth = gaussian_filter_reflect(diff, sigma);
    for (std::size_t i = 0; i + 2 < n; ++i) second[i * dims + a] = smooth[i + 1] - smooth[i];
  }
  std::vector<double> curvature(n - 2);
  for (std::size_t i = 0; i + 2 < n; ++i) {
    double s = 0;
    for (std::size_t a = 0; a < dims; ++a) s += second[i * dims + a] * second[i * dims + a];
    curvature[i] = std::sqrt(s);
  }
  return curvature;
}

std::vector<double> gaussian_smoothed_curvature(std::span<const Point4> points, double sigma) {
  std::vector<double> flat;
  flat.reserve(points.size() * 4);
  for (const auto& p : points) flat.insert(flat.end(), p.begin(), p.end());
  return gaussian_smoothed_curvature(flat, 4, sigma);
}

std::vector<Segment> compute_segments_raw(std::span<const double> curvature, std::size_t n_segments,
                                          double sensitivity) {
  const std::size_t n = curvature.size();
  if (n_segments == 0) throw std::invalid_argument("compute_segments: n_segments must be >= 1");
  if (n < n_segments) throw std::invalid_argument("compute_segments: fewer samples than segments");
  const auto [mn, mx] = std::minmax_element(curvature.begin(), curvature.end());
  double range = *mx - *mn;
  if (range == 0.0) range = 1e-12;
  std::vector<double> cumulative(n);
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::pow((curvature[i] - *mn) / range, sensitivity);
    cumulative[i] = acc;
  }
  const double top = cumulative.back();
  std::vector<double> bounds(n_segments + 1);
  for (std::size_t i = 0; i <= n_segments; ++i)
    bounds[i] = top * static_cast<double>(i) / static_cast<double>(n_segments);

  std::vector<Segment> segments;
  std::size_t last = 0;
  for (std::size_t i = 0; i < n_segments; ++i) {
    // cumulative is non-decreasing, so the matches form one contiguous run.
    std::size_t first = n, final = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (cumulative[j] >= bounds[i] && cumulative[j] < bounds[i + 1]) {
        if (first == n) first = j;
        final = j;
      }
    }
    if (first != n) {
      const std::size_t start = std::max(first, last);
      if (i < n_segments - 1) {
        segments.emplace_back(start, std::max(final + 1, start + 1));
      } else {
        segments.emplace_back(start, n);
      }
      last = segments.back().second;
    } else {
      segments.emplace_back(last, last + 1);
      last += 1;
    }
  }
  return segments;
}

std::vector<Segment> compute_segments(std::span<const double> curvature, std::size_t n_segments,
                                      double sensitivity) {
  auto raw = compute_segments_raw(curvature, n_segments, sensitivity);
  // The loop above can end short of n (empty final bucket) or run past it
  // (several trailing empty buckets). Clamp the interior boundaries so the
  // result always partitions [0, n); valid partitions pass through unchanged.
  const std::size_t n = curvature.size();
  std::vector<Segment> out(n_segments);
  std::size_t prev = 0;
  for (std::size_t k = 0; k < n_segments; ++k) {
    std::size_t end = n;
    if (k + 1 < n_segments) {
      const std::size_t lo = prev + 1;
      const std::size_t hi = n - (n_segments - 1 - k);
      end = std::clamp(raw[k].second, lo, hi);
    }
    out[k] = {prev, end};
    prev = end;
  }
  return out;
}

}  // namespace vetta::geom
