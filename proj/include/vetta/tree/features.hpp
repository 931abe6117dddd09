#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "vetta/geom/fourier.hpp"
#include "vetta/tree/tree.hpp"

namespace vetta::tree {

inline constexpr std::size_t kVesselEmbeddingDim = 64;
inline constexpr double kMinRadius = 0.01;

/// Maps data coordinates into the region the models see. Fourier features
/// have period 1, so model coordinates are kept inside [-0.5, 0.5).
struct ModelFrame {
  int dims = 2;
  Vec3 center{0.5, 0.5, 0.0};
  double scale = 0.4;  // model = (p - center) * scale

  /// Unit square -> [-0.2, 0.2]^2.
  static ModelFrame unit_square();
  /// Bounding box of all node and polyline positions; longest side -> 0.5.
  static ModelFrame fit(const VesselTree& tree);
  /// Shared frame over a whole dataset (bounding box of every tree).
  static ModelFrame fit_all(const std::vector<VesselTree>& trees);
  static ModelFrame for_tree(const VesselTree& tree) { return tree.dims == 2 ? unit_square() : fit(tree); }

  Vec3 to_model(const Vec3& p) const;
  Vec3 from_model(const Vec3& m) const;
};

enum class FeatureMode { full, partial };

/// Column layout of one edge row. Partial rows carry a query flag right
/// after the topology blocks; stripped partial rows drop radii and z_v.
struct FeatureLayout {
  int dims = 2;
  geom::FourierConfig fourier;
  FeatureMode mode = FeatureMode::full;
  bool stripped = false;

  std::size_t pos_width() const { return static_cast<std::size_t>(dims) * fourier.width_per_axis(); }
  bool has_query() const { return mode == FeatureMode::partial; }
  bool has_radius() const { return dims == 3 && !stripped; }
  bool has_embedding() const { return dims == 3 && !stripped; }
  bool has_skip() const { return dims == 3; }

  std::size_t pa() const { return 0; }
  std::size_t pb() const { return pos_width(); }
  std::size_t ta() const { return 2 * pos_width(); }
  std::size_t tb() const { return ta() + 3; }
  std::size_t query() const { return tb() + 3; }
  std::size_t ra() const { return query() + (has_query() ? 1 : 0); }
  std::size_t rb() const { return ra() + 1; }
  std::size_t zv() const { return ra() + (has_radius() ? 2 : 0); }
  std::size_t skip() const { return zv() + (has_embedding() ? kVesselEmbeddingDim : 0); }
  std::size_t width() const { return skip() + (has_skip() ? 1 : 0); }
};

enum class RowKind : std::uint8_t { start_token, semi_edge, edge };

struct RowInfo {
  RowKind kind = RowKind::edge;
  NodeId parent = -1;
  NodeId child = -1;
};

struct EdgeFeatures {
  FeatureLayout layout;
  std::vector<double> data;  // rows x layout.width()
  std::vector<std::uint8_t> mask;
  std::vector<RowInfo> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t active() const;
  const double* row(std::size_t i) const { return data.data() + i * layout.width(); }
};

/// Vessel embeddings keyed by the child node id of their edge.
using EmbeddingMap = std::map<NodeId, std::vector<double>>;
/// Child counts to use for topology one-hots instead of the edge-derived ones.
using ChildCountMap = std::map<NodeId, int>;

struct FeaturizeOptions {
  FeatureMode mode = FeatureMode::full;
  std::optional<NodeId> query;
  const EmbeddingMap* embeddings = nullptr;
  const ChildCountMap* declared_children = nullptr;
  geom::FourierConfig fourier;
};

/// Full mode: semi-edge row then one row per edge. Partial mode: start-token
/// row (zeros; the model substitutes its learned token), then the semi-edge
/// once a root exists, then the edges; the row ending at the query node (the
/// semi-edge when the query is the root) gets query flag 1. All rows active.
EdgeFeatures featurize_edges(const VesselTree& tree, const ModelFrame& frame, const FeaturizeOptions& opts);

/// Clears the mask of every edge row not on the root -> query path.
EdgeFeatures filter_non_proximal(EdgeFeatures f, const VesselTree& tree, NodeId query);

/// Drops the radius and vessel-embedding columns of 3D partial features.
/// Full-mode and 2D features are returned unchanged.
EdgeFeatures strip_partial_extras(const EdgeFeatures& f);

/// Natural log of a radius, floored at kMinRadius.
inline double log_radius(double r) { return std::log(std::max(r, kMinRadius)); }

}  // namespace vetta::tree
