#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vetta/tree/tree.hpp"

namespace vetta::tree {

struct GlobalAugment {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  double angle_deg = 0.0;  // 2D only
  double zoom = 1.0;
  Vec3 translation{0, 0, 0};
  Vec3 center{0, 0, 0};
};

struct AugmentRanges {
  double max_angle_deg = 45.0;
  double zoom_min = 0.75;
  double zoom_max = 1.5;
  double max_shift_2d = 0.05;  // unit-square units
  double max_shift_3d = 2.0;   // mm
};

/// 2D: rotation uniform in [-45, 45] degrees about (0.5, 0.5). 3D: uniformly
/// random rotation about the bounding-box centre. Zoom uniform in [0.75, 1.5].
GlobalAugment draw_global_augment(const VesselTree& tree, std::uint64_t seed, const AugmentRanges& ranges = {});

/// p -> R (p - c) * zoom + c + translation for nodes and polylines; radii scale by zoom.
VesselTree apply_global_augment(const VesselTree& tree, const GlobalAugment& aug);

VesselTree augment_global(const VesselTree& tree, std::uint64_t seed, const AugmentRanges& ranges = {});

/// Adds i.i.d. N(0, sigma^2) to the first `dims` coordinates of each position.
std::vector<Vec3> augment_jitter(std::vector<Vec3> positions, std::uint64_t seed, double sigma = 0.005, int dims = 3);

}  // namespace vetta::tree
