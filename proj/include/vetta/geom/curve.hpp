#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace vetta::geom {

using Point4 = std::array<double, 4>;  // x, y, z, r

/// Discrete Gaussian kernel truncated at `truncate` * sigma (radius rounded
/// to the nearest sample), normalized to unit sum. sigma <= 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma, double truncate = 4.0);

/// 1D convolution with mirror ("d c b a | a b c d") boundary handling.
std::vector<double> gaussian_filter_reflect(std::span<const double> x, double sigma, double truncate = 4.0);

/// Curvature proxy along a sampled curve: first difference, Gaussian
/// smoothing per axis, second difference, per-index Euclidean norm.
/// `points` holds n rows of `dims` values; the result has n - 2 entries.
std::vector<double> gaussian_smoothed_curvature(std::span<const double> points, std::size_t dims,
                                                double sigma = 2.0);
std::vector<double> gaussian_smoothed_curvature(std::span<const Point4> points, double sigma = 2.0);

using Segment = std::pair<std::size_t, std::size_t>;  // [start, end)

/// Splits indices [0, n) into n_segments runs holding equal shares of the
/// min-max normalized, sensitivity-powered curvature mass. Degenerate input
/// (max == min) normalizes against (max - min + 1e-12).
std::vector<Segment> compute_segments(std::span<const double> curvature, std::size_t n_segments,
                                      double sensitivity = 0.75);

/// The literal boundary-splitting loop, before partition repair. Exposed for tests.
std::vector<Segment> compute_segments_raw(std::span<const double> curvature, std::size_t n_segments,
                                          double sensitivity);

}  // namespace vetta::geom
