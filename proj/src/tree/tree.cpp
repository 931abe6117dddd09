#include "vetta/tree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <tuple>

namespace vetta::tree {

void VesselTree::reindex() const {
  if (indexed_nodes_ == nodes.size() && index_.size() == nodes.size()) return;
  index_.clear();
  for (std::size_t i = 0; i < nodes.size(); ++i) index_.emplace(nodes[i].id, i);
  indexed_nodes_ = nodes.size();
}

NodeId VesselTree::add_node(const Vec3& pos, std::optional<double> r) {
  NodeId id = 0;
  for (const auto& n : nodes) id = std::max(id, n.id + 1);
  insert_node(TreeNode{id, pos, r});
  return id;
}

void VesselTree::insert_node(const TreeNode& n) {
  if (has_node(n.id)) throw TreeError("duplicate node id " + std::to_string(n.id));
  nodes.push_back(n);
  if (root < 0 && nodes.size() == 1) root = n.id;
}

void VesselTree::add_edge(NodeId parent, NodeId child, std::optional<geom::PolylineVessel> polyline, bool skip) {
  edges.push_back(TreeEdge{parent, child, std::move(polyline), skip});
}

bool VesselTree::has_node(NodeId id) const {
  reindex();
  auto hit = [&] {
    auto it = index_.find(id);
    return it != index_.end() && it->second < nodes.size() && nodes[it->second].id == id;
  };
  if (hit()) return true;
  // Fields are public, so the index may be stale after direct edits.
  indexed_nodes_ = static_cast<std::size_t>(-1);
  reindex();
  return hit();
}

const TreeNode& VesselTree::node(NodeId id) const {
  if (!has_node(id)) throw TreeError("unknown node id " + std::to_string(id));
  return nodes[index_.at(id)];
}

TreeNode& VesselTree::node(NodeId id) {
  if (!has_node(id)) throw TreeError("unknown node id " + std::to_string(id));
  return nodes[index_.at(id)];
}

std::vector<NodeId> VesselTree::children(NodeId id) const {
  std::vector<NodeId> out;
  for (const auto& e : edges)
    if (e.parent == id) out.push_back(e.child);
  return out;
}

std::optional<NodeId> VesselTree::parent(NodeId id) const {
  for (const auto& e : edges)
    if (e.child == id) return e.parent;
  return std::nullopt;
}

int VesselTree::n_children(NodeId id) const {
  int n = 0;
  for (const auto& e : edges) n += e.parent == id;
  return n;
}

std::optional<std::size_t> VesselTree::incoming_edge(NodeId child) const {
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (edges[i].child == child) return i;
  return std::nullopt;
}

std::vector<NodeId> VesselTree::path_from_root(NodeId id) const {
  std::vector<NodeId> path{id};
  std::set<NodeId> seen{id};
  while (path.back() != root) {
    auto p = parent(path.back());
    if (!p) throw TreeError("node " + std::to_string(id) + " is not connected to the root");
    if (!seen.insert(*p).second) throw TreeError("cycle above node " + std::to_string(id));
    path.push_back(*p);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<NodeId> VesselTree::bfs_order() const {
  std::vector<NodeId> order;
  if (nodes.empty()) return order;
  std::deque<NodeId> queue{root};
  std::set<NodeId> seen{root};
  while (!queue.empty()) {
    const NodeId id = queue.front();
    queue.pop_front();
    order.push_back(id);
    for (NodeId c : children(id))
      if (seen.insert(c).second) queue.push_back(c);
  }
  return order;
}

std::size_t VesselTree::bifurcation_count() const {
  std::map<NodeId, int> out;
  for (const auto& e : edges) ++out[e.parent];
  std::size_t n = 0;
  for (const auto& [id, c] : out) n += c >= 2;
  return n;
}

void validate_tree(const VesselTree& t) {
  if (t.dims != 2 && t.dims != 3) throw TreeError("dims must be 2 or 3");
  if (t.nodes.empty()) throw TreeError("tree has no nodes");
  std::map<NodeId, std::size_t> idx;
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    if (!idx.emplace(n.id, i).second) throw TreeError("duplicate node id " + std::to_string(n.id));
    for (double c : n.pos)
      if (!std::isfinite(c)) throw TreeError("node " + std::to_string(n.id) + " has a non-finite position");
    if (n.r && !(*n.r > 0 && std::isfinite(*n.r)))
      throw TreeError("node " + std::to_string(n.id) + " has a non-positive radius");
  }
  if (!idx.count(t.root)) throw TreeError("root " + std::to_string(t.root) + " is not a node");
  std::map<NodeId, int> in_deg, out_deg;
  std::map<NodeId, std::vector<NodeId>> kids;
  for (const auto& e : t.edges) {
    if (!idx.count(e.parent)) throw TreeError("edge parent " + std::to_string(e.parent) + " is not a node");
    if (!idx.count(e.child)) throw TreeError("edge child " + std::to_string(e.child) + " is not a node");
    if (e.parent == e.child) throw TreeError("self-loop on node " + std::to_string(e.child));
    if (++in_deg[e.child] > 1) throw TreeError("node " + std::to_string(e.child) + " has more than one parent");
    if (++out_deg[e.parent] > 2) throw TreeError("node " + std::to_string(e.parent) + " has more than 2 children");
    kids[e.parent].push_back(e.child);
    if (e.polyline) {
      try {
        e.polyline->validate();
      } catch (const std::exception& ex) {
        throw TreeError("edge " + std::to_string(e.parent) + "->" + std::to_string(e.child) + ": " + ex.what());
      }
    }
  }
  if (in_deg.count(t.root)) throw TreeError("root has a parent");
  if (t.edges.size() != t.nodes.size() - 1)
    throw TreeError("expected " + std::to_string(t.nodes.size() - 1) + " edges, found " +
                    std::to_string(t.edges.size()));
  std::set<NodeId> seen{t.root};
  std::vector<NodeId> stack{t.root};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    for (NodeId c : kids[id]) {
      if (!seen.insert(c).second) throw TreeError("cycle through node " + std::to_string(c));
      stack.push_back(c);
    }
  }
  if (seen.size() != t.nodes.size()) throw TreeError("tree is not connected");
}

bool is_valid_tree(const VesselTree& tree, std::string* reason) {
  try {
    validate_tree(tree);
    return true;
  } catch (const TreeError& e) {
    if (reason) *reason = e.what();
    return false;
  }
}

namespace {

bool close(double a, double b, double tol) { return a == b || std::abs(a - b) <= tol; }

bool points_equal(const std::vector<geom::Point4>& a, const std::vector<geom::Point4>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int c = 0; c < 4; ++c)
      if (!close(a[i][c], b[i][c], tol)) return false;
  return true;
}

}  // namespace

bool trees_equal(const VesselTree& a, const VesselTree& b, double tol) {
  if (a.dims != b.dims || a.root != b.root || a.nodes.size() != b.nodes.size() || a.edges.size() != b.edges.size())
    return false;
  for (const auto& n : a.nodes) {
    if (!b.has_node(n.id)) return false;
    const auto& m = b.node(n.id);
    for (int c = 0; c < 3; ++c)
      if (!close(n.pos[c], m.pos[c], tol)) return false;
    if (n.r.has_value() != m.r.has_value() || (n.r && !close(*n.r, *m.r, tol))) return false;
  }
  auto key = [](const TreeEdge& e) { return std::make_tuple(e.parent, e.child); };
  std::vector<const TreeEdge*> ea, eb;
  for (const auto& e : a.edges) ea.push_back(&e);
  for (const auto& e : b.edges) eb.push_back(&e);
  auto by_key = [&](const TreeEdge* x, const TreeEdge* y) { return key(*x) < key(*y); };
  std::sort(ea.begin(), ea.end(), by_key);
  std::sort(eb.begin(), eb.end(), by_key);
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (key(*ea[i]) != key(*eb[i]) || ea[i]->skip != eb[i]->skip) return false;
    if (ea[i]->polyline.has_value() != eb[i]->polyline.has_value()) return false;
    if (ea[i]->polyline && !points_equal(ea[i]->polyline->points, eb[i]->polyline->points, tol)) return false;
  }
  return true;
}

}  // namespace vetta::tree
