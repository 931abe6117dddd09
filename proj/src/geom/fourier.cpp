#include "vetta/geom/fourier.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vetta::geom {

void FourierConfig::validate() const {
  if (octaves.empty()) throw std::invalid_argument("fourier: no octaves");
  for (std::size_t i = 0; i < octaves.size(); ++i) {
    if (!(octaves[i] > 0)) throw std::invalid_argument("fourier: octaves must be positive");
    if (i && !(octaves[i] > octaves[i - 1]))
      throw std::invalid_argument("fourier: octaves must be strictly increasing");
  }
}

void lift_fourier_into(std::span<const double> coords, const FourierConfig& cfg, std::span<double> out) {
  const std::size_t w = cfg.width_per_axis();
  if (out.size() != w * coords.size()) throw std::invalid_argument("lift_fourier: output size mismatch");
  for (std::size_t c = 0; c < coords.size(); ++c) {
    for (std::size_t o = 0; o < cfg.octaves.size(); ++o) {
      const double phase = 2.0 * std::numbers::pi * cfg.octaves[o] * coords[c];
      out[c * w + 2 * o] = std::cos(phase);
      out[c * w + 2 * o + 1] = std::sin(phase);
    }
  }
}

std::vector<double> lift_fourier(std::span<const double> coords, const FourierConfig& cfg) {
  std::vector<double> out(cfg.width_per_axis() * coords.size());
  lift_fourier_into(coords, cfg, out);
  return out;
}

FourierInverter::FourierInverter(FourierConfig cfg, Interval domain, std::size_t grid_size)
    : cfg_(std::move(cfg)), domain_(domain), grid_size_(grid_size) {
  cfg_.validate();
  if (!(domain.hi > domain.lo) || grid_size == 0) throw std::invalid_argument("fourier: bad inversion grid");
  const std::size_t w = cfg_.width_per_axis();
  grid_.resize(grid_size);
  table_.resize(grid_size * w);
  for (std::size_t i = 0; i < grid_size; ++i) {
    grid_[i] = domain.lo + spacing() * static_cast<double>(i);
    const double x = grid_[i];
    lift_fourier_into(std::span<const double>(&x, 1), cfg_, std::span<double>(table_.data() + i * w, w));
  }
}

double FourierInverter::invert_axis(std::span<const double> f) const {
  const std::size_t w = cfg_.width_per_axis();
  if (f.size() != w) throw std::invalid_argument("invert_fourier: feature width mismatch");
  std::vector<double> dist(grid_size_);
  double best = INFINITY;
  for (std::size_t i = 0; i < grid_size_; ++i) {
    double s = 0;
    const double* row = table_.data() + i * w;
    for (std::size_t c = 0; c < w; ++c) s += (row[c] - f[c]) * (row[c] - f[c]);
    dist[i] = s;
    best = std::min(best, s);
  }
  // Aliased grid points differ from the true minimum only by rounding.
  const double tol = 1e-9 * std::max(1.0, best);
  for (std::size_t i = 0; i < grid_size_; ++i)
    if (dist[i] <= best + tol) return grid_[i];
  return grid_.front();
}

std::vector<double> FourierInverter::invert(std::span<const double> features) const {
  const std::size_t w = cfg_.width_per_axis();
  if (features.size() % w != 0) throw std::invalid_argument("invert_fourier: feature width mismatch");
  std::vector<double> out(features.size() / w);
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = invert_axis(features.subspan(a * w, w));
  return out;
}

std::vector<double> invert_fourier(std::span<const double> features, const FourierConfig& cfg,
                                   Interval domain, std::size_t grid_size) {
  return FourierInverter(cfg, domain, grid_size).invert(features);
}

}  // namespace vetta::geom
