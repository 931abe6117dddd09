#pragma once

#include <span>
#include <vector>

namespace vetta::geom {

struct FourierConfig {
  std::vector<double> octaves{1, 2, 4, 8, 16, 32};

  /// Throws unless octaves are positive and strictly increasing.
  void validate() const;
  std::size_t width_per_axis() const { return 2 * octaves.size(); }
};

struct Interval {
  double lo = -0.5;
  double hi = 0.5;
};

/// For each coordinate, for each octave a: (cos 2*pi*a*x, sin 2*pi*a*x).
std::vector<double> lift_fourier(std::span<const double> coords, const FourierConfig& cfg);
void lift_fourier_into(std::span<const double> coords, const FourierConfig& cfg, std::span<double> out);

/// Grid-search inverse of lift_fourier, one axis at a time. The grid holds
/// `grid_size` points spaced (hi - lo) / grid_size starting at lo (the upper
/// end is open). Among near-equal minima the smallest coordinate wins.
class FourierInverter {
 public:
  FourierInverter(FourierConfig cfg, Interval domain, std::size_t grid_size = 1000);

  double invert_axis(std::span<const double> axis_features) const;
  std::vector<double> invert(std::span<const double> features) const;

  double spacing() const { return (domain_.hi - domain_.lo) / static_cast<double>(grid_size_); }
  const FourierConfig& config() const { return cfg_; }
  const Interval& domain() const { return domain_; }

 private:
  FourierConfig cfg_;
  Interval domain_;
  std::size_t grid_size_;
  std::vector<double> grid_;
  std::vector<double> table_;  // grid_size x width_per_axis
};

std::vector<double> invert_fourier(std::span<const double> features, const FourierConfig& cfg,
                                   Interval domain, std::size_t grid_size = 1000);

}  // namespace vetta::geom
