#pragma once

#include <cstdint>
#include <vector>

#include "vetta/tree/tree.hpp"

namespace vetta::tree {

struct SynthParams {
  int dims = 2;
  int depth = 4;  // node levels; depth 1 is a lone root
  double p_bifurcate = 0.55;
  double p_continue = 0.15;
  double length_decay = 0.72;
  double angle_min_deg = 20.0;
  double angle_max_deg = 50.0;
  // 2D, unit square
  double trunk_min = 0.18;
  double trunk_max = 0.28;
  // 3D, millimetres
  double trunk_mm_min = 15.0;
  double trunk_mm_max = 30.0;
  double p_short = 0.12;  // chance of a sub-2.5mm segment below a bifurcation
  double root_radius_min = 1.5;
  double root_radius_max = 2.5;
  int polyline_points = 32;
};

/// Random recursive branching tree. 2D nodes lie in [0.02, 0.98]^2 with the
/// root near the bottom edge; 3D trees are in millimetres with smooth cubic
/// polylines and tapering radii. Deterministic per (seed, params).
VesselTree generate_synthetic_tree(std::uint64_t seed, const SynthParams& params);

/// Single synthetic vessel (circular arc or helix section) in millimetres.
geom::PolylineVessel generate_synthetic_vessel(std::uint64_t seed, std::size_t n_points = 96);

/// Random subtrees rooted at internal nodes, truncated where the root-to-node
/// arc length exceeds `max_arc` (the cut edge ends at a new leaf). Subtrees
/// with fewer than 3 edges or without a bifurcation are dropped.
std::vector<VesselTree> sample_subtree(const VesselTree& tree, double max_arc, std::size_t count,
                                       std::uint64_t seed);

/// Arc length of an edge: polyline length, or the straight node distance.
double edge_arc_length(const VesselTree& tree, const TreeEdge& e);

/// Sets skip exactly on edges whose arc length is <= threshold.
VesselTree mark_skip_vessels(VesselTree tree, double threshold = 2.5);

}  // namespace vetta::tree
