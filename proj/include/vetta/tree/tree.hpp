#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vetta/geom/vessel.hpp"

namespace vetta::tree {

using NodeId = std::int64_t;
using Vec3 = std::array<double, 3>;

struct TreeNode {
  NodeId id = 0;
  Vec3 pos{0, 0, 0};  // z = 0 for 2D trees
  std::optional<double> r;
};

struct TreeEdge {
  NodeId parent = 0;
  NodeId child = 0;
  std::optional<geom::PolylineVessel> polyline;
  bool skip = false;
};

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rooted tree with directed parent -> child edges. Child counts are derived
/// from the edge list. Lookups go through an index that is rebuilt lazily.
class VesselTree {
 public:
  int dims = 2;
  NodeId root = -1;
  std::vector<TreeNode> nodes;
  std::vector<TreeEdge> edges;

  NodeId add_node(const Vec3& pos, std::optional<double> r = std::nullopt);
  /// Adds a node with an explicit id; throws on duplicates.
  void insert_node(const TreeNode& node);
  void add_edge(NodeId parent, NodeId child, std::optional<geom::PolylineVessel> polyline = std::nullopt,
                bool skip = false);

  bool has_node(NodeId id) const;
  const TreeNode& node(NodeId id) const;
  TreeNode& node(NodeId id);
  std::vector<NodeId> children(NodeId id) const;
  std::optional<NodeId> parent(NodeId id) const;
  int n_children(NodeId id) const;
  /// Index into `edges` of the edge ending at `child`, if any.
  std::optional<std::size_t> incoming_edge(NodeId child) const;
  /// Node ids from the root down to `id` (inclusive).
  std::vector<NodeId> path_from_root(NodeId id) const;
  /// Nodes in breadth-first order from the root, children in edge order.
  std::vector<NodeId> bfs_order() const;
  std::size_t bifurcation_count() const;

  bool empty() const { return nodes.empty(); }

 private:
  void reindex() const;
  mutable std::map<NodeId, std::size_t> index_;
  mutable std::size_t indexed_nodes_ = 0;
};

/// Throws TreeError describing the first violated invariant: unique ids,
/// root present with in-degree 0, every other node with exactly one parent,
/// all nodes reachable from the root (hence acyclic), <= 2 children, finite
/// coordinates, positive radii where present.
void validate_tree(const VesselTree& tree);
bool is_valid_tree(const VesselTree& tree, std::string* reason = nullptr);

/// Topology class used in one-hot features: 0 = bifurcation, 1 = one child, 2 = leaf.
inline int topology_index(int n_children) { return 2 - n_children; }

/// Structural equality: same root, same node set with equal fields, same edge multiset.
bool trees_equal(const VesselTree& a, const VesselTree& b, double tol = 0.0);

}  // namespace vetta::tree
