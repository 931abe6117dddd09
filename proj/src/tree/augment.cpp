#include "vetta/tree/augment.hpp"

#include <cmath>
#include <numbers>

#include "vetta/nn/rng.hpp"
#include "vetta/tree/features.hpp"

namespace vetta::tree {

GlobalAugment draw_global_augment(const VesselTree& tree, std::uint64_t seed, const AugmentRanges& ranges) {
  nn::Rng rng(nn::derive_seed(seed, 0xA06ULL));
  GlobalAugment a;
  if (tree.dims == 2) {
    a.angle_deg = rng.uniform(-ranges.max_angle_deg, ranges.max_angle_deg);
    const double th = a.angle_deg * std::numbers::pi / 180.0;
    a.rotation = {std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0, 0, 0, 1};
    a.center = {0.5, 0.5, 0.0};
    a.translation = {rng.uniform(-ranges.max_shift_2d, ranges.max_shift_2d),
                     rng.uniform(-ranges.max_shift_2d, ranges.max_shift_2d), 0.0};
  } else {
    // Uniform rotation from a normalized Gaussian quaternion.
    double q[4];
    double n = 0;
    do {
      n = 0;
      for (double& v : q) {
        v = rng.normal();
        n += v * v;
      }
    } while (n < 1e-12);
    n = std::sqrt(n);
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    a.rotation = {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
                  2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
                  2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
    a.center = ModelFrame::fit(tree).center;
    for (auto& t : a.translation) t = rng.uniform(-ranges.max_shift_3d, ranges.max_shift_3d);
  }
  a.zoom = rng.uniform(ranges.zoom_min, ranges.zoom_max);
  return a;
}

VesselTree apply_global_augment(const VesselTree& tree, const GlobalAugment& a) {
  auto map = [&](double x, double y, double z) {
    const double d[3] = {x - a.center[0], y - a.center[1], z - a.center[2]};
    Vec3 out;
    for (int r = 0; r < 3; ++r) {
      const double v = a.rotation[3 * r] * d[0] + a.rotation[3 * r + 1] * d[1] + a.rotation[3 * r + 2] * d[2];
      out[r] = v * a.zoom + a.center[r] + a.translation[r];
    }
    if (tree.dims == 2) out[2] = 0.0;
    return out;
  };
  VesselTree t = tree;
  for (auto& n : t.nodes) {
    n.pos = map(n.pos[0], n.pos[1], n.pos[2]);
    if (n.r) *n.r *= a.zoom;
  }
  for (auto& e : t.edges) {
    if (!e.polyline) continue;
    for (auto& p : e.polyline->points) {
      const Vec3 q = map(p[0], p[1], p[2]);
      p = {q[0], q[1], q[2], p[3] * a.zoom};
    }
  }
  return t;
}

VesselTree augment_global(const VesselTree& tree, std::uint64_t seed, const AugmentRanges& ranges) {
  return apply_global_augment(tree, draw_global_augment(tree, seed, ranges));
}

std::vector<Vec3> augment_jitter(std::vector<Vec3> positions, std::uint64_t seed, double sigma, int dims) {
  if (sigma == 0.0) return positions;
  nn::Rng rng(nn::derive_seed(seed, 0x717ULL));
  for (auto& p : positions)
    for (int c = 0; c < dims; ++c) p[c] += rng.normal(0.0, sigma);
  return positions;
}

}  // namespace vetta::tree
