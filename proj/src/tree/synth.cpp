#include "vetta/tree/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <set>

#include "vetta/nn/rng.hpp"

namespace vetta::tree {

using nn::Rng;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 unit(const Vec3& a) {
  const double n = norm(a);
  return n > 0 ? (1.0 / n) * a : Vec3{1, 0, 0};
}

Vec3 random_unit(Rng& rng) {
  for (;;) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    if (norm(v) > 1e-6) return unit(v);
  }
}

/// Unit vector perpendicular to `d`.
Vec3 random_perpendicular(const Vec3& d, Rng& rng) {
  for (;;) {
    Vec3 v = random_unit(rng);
    Vec3 p = v - dot(v, d) * d;
    if (norm(p) > 1e-3) return unit(p);
  }
}

/// Rotates d towards the perpendicular axis by `angle` radians.
Vec3 tilt(const Vec3& d, const Vec3& perp, double angle) {
  return unit(std::cos(angle) * d + std::sin(angle) * perp);
}

struct Pending {
  NodeId id;
  int level;
  Vec3 heading;
  double length;
  double radius;
};

double clamp01(double v) { return std::clamp(v, 0.02, 0.98); }

VesselTree generate_2d(Rng& rng, const SynthParams& p) {
  VesselTree t;
  t.dims = 2;
  const NodeId root = t.add_node({0.5 + rng.uniform(-0.08, 0.08), 0.08 + rng.uniform(0.0, 0.06), 0.0});
  if (p.depth < 2) return t;
  std::deque<Pending> queue;
  const double h0 = kPi / 2 + rng.uniform(-1.0, 1.0) * 15.0 * kPi / 180.0;
  const Vec3 heading0{std::cos(h0), std::sin(h0), 0.0};
  const double len0 = rng.uniform(p.trunk_min, p.trunk_max);
  const auto& rp = t.node(root).pos;
  const NodeId trunk = t.add_node({clamp01(rp[0] + len0 * heading0[0]), clamp01(rp[1] + len0 * heading0[1]), 0.0});
  t.add_edge(root, trunk);
  queue.push_back({trunk, 1, heading0, len0, 0.0});
  const double amin = p.angle_min_deg * kPi / 180.0, amax = p.angle_max_deg * kPi / 180.0;
  while (!queue.empty()) {
    const Pending cur = queue.front();
    queue.pop_front();
    if (cur.level >= p.depth - 1) continue;
    const double u = rng.uniform();
    std::vector<double> turns;
    if (u < p.p_bifurcate) {
      turns = {rng.uniform(amin, amax), -rng.uniform(amin, amax)};
    } else if (u < p.p_bifurcate + p.p_continue) {
      turns = {rng.uniform(-amin, amin)};
    }
    const double base = std::atan2(cur.heading[1], cur.heading[0]);
    for (double turn : turns) {
      const double a = base + turn;
      const Vec3 h{std::cos(a), std::sin(a), 0.0};
      const double len = cur.length * p.length_decay * rng.uniform(0.8, 1.2);
      const auto& pp = t.node(cur.id).pos;
      const NodeId c = t.add_node({clamp01(pp[0] + len * h[0]), clamp01(pp[1] + len * h[1]), 0.0});
      t.add_edge(cur.id, c);
      queue.push_back({c, cur.level + 1, h, len, 0.0});
    }
  }
  return t;
}

/// Cubic Bezier between a and b leaving along `ha` with a random lateral bulge.
std::vector<geom::Point4> bezier_polyline(const Vec3& a, const Vec3& ha, const Vec3& b, double ra, double rb,
                                          int n, Rng& rng, Vec3* end_heading) {
  const double len = norm(b - a);
  const Vec3 d = unit(b - a);
  const Vec3 bulge = random_perpendicular(d, rng);
  const Vec3 c1 = a + (len / 3.0) * ha;
  const Vec3 c2 = b - (len / 3.0) * d + (rng.uniform(-0.35, 0.35) * len) * bulge;
  std::vector<geom::Point4> pts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / (n - 1);
    const double w0 = (1 - s) * (1 - s) * (1 - s), w1 = 3 * s * (1 - s) * (1 - s), w2 = 3 * s * s * (1 - s),
                 w3 = s * s * s;
    const Vec3 q = w0 * a + w1 * c1 + w2 * c2 + w3 * b;
    pts[i] = {q[0], q[1], q[2], ra + (rb - ra) * s};
  }
  pts.front() = {a[0], a[1], a[2], ra};
  pts.back() = {b[0], b[1], b[2], rb};
  *end_heading = unit(b - c2);
  return pts;
}

VesselTree generate_3d(Rng& rng, const SynthParams& p) {
  VesselTree t;
  t.dims = 3;
  const double r0 = rng.uniform(p.root_radius_min, p.root_radius_max);
  const NodeId root = t.add_node({0.0, 0.0, 0.0}, r0);
  if (p.depth < 2) return t;
  std::deque<Pending> queue;
  const auto attach = [&](const Pending& from, const Vec3& dir, double len, double r) {
    const Vec3 a = t.node(from.id).pos;
    const Vec3 b = a + len * dir;
    Vec3 h_end;
    auto pts = bezier_polyline(a, from.heading, b, from.radius, r, p.polyline_points, rng, &h_end);
    const NodeId c = t.add_node(b, r);
    t.add_edge(from.id, c, geom::PolylineVessel{std::move(pts)});
    queue.push_back({c, from.level + 1, h_end, len, r});
  };
  const Pending rootp{root, 0, random_unit(rng), 0.0, r0};
  attach(rootp, rootp.heading, rng.uniform(p.trunk_mm_min, p.trunk_mm_max), r0 * rng.uniform(0.88, 0.97));
  const double amin = p.angle_min_deg * kPi / 180.0, amax = p.angle_max_deg * kPi / 180.0;
  while (!queue.empty()) {
    const Pending cur = queue.front();
    queue.pop_front();
    if (cur.level >= p.depth - 1) continue;
    const double u = rng.uniform();
    const Vec3 perp = random_perpendicular(cur.heading, rng);
    auto child_len = [&] {
      if (rng.uniform() < p.p_short) return rng.uniform(0.8, 2.4);
      return std::max(3.0, cur.length * p.length_decay * rng.uniform(0.7, 1.3));
    };
    if (u < p.p_bifurcate) {
      const double ra = cur.radius * rng.uniform(0.7, 0.85), rb = cur.radius * rng.uniform(0.6, 0.8);
      attach(cur, tilt(cur.heading, perp, rng.uniform(amin, amax)), child_len(), std::max(0.2, ra));
      attach(cur, tilt(cur.heading, -1.0 * perp, rng.uniform(amin, amax)), child_len(), std::max(0.2, rb));
    } else if (u < p.p_bifurcate + p.p_continue) {
      attach(cur, tilt(cur.heading, perp, rng.uniform(0.0, amin)), child_len(),
             std::max(0.2, cur.radius * rng.uniform(0.85, 0.97)));
    }
  }
  return t;
}

double polyline_length(const std::vector<geom::Point4>& pts) {
  double s = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) s += geom::distance3(pts[i - 1], pts[i]);
  return s;
}

/// Prefix of a polyline up to arc length `cap`, ending at an interpolated point.
std::vector<geom::Point4> cut_polyline(const std::vector<geom::Point4>& pts, double cap) {
  std::vector<geom::Point4> out{pts.front()};
  double s = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d = geom::distance3(pts[i - 1], pts[i]);
    if (s + d >= cap) {
      const double w = d > 0 ? (cap - s) / d : 0.0;
      geom::Point4 q;
      for (int c = 0; c < 4; ++c) q[c] = pts[i - 1][c] + w * (pts[i][c] - pts[i - 1][c]);
      out.push_back(q);
      return out;
    }
    s += d;
    out.push_back(pts[i]);
  }
  return out;
}

}  // namespace

VesselTree generate_synthetic_tree(std::uint64_t seed, const SynthParams& params) {
  if (params.depth < 1) throw std::invalid_argument("generate_synthetic_tree: depth must be >= 1");
  if (params.dims != 2 && params.dims != 3) throw std::invalid_argument("generate_synthetic_tree: dims must be 2 or 3");
  Rng rng(nn::derive_seed(seed, 0x7EEULL, static_cast<std::uint64_t>(params.dims)));
  return params.dims == 2 ? generate_2d(rng, params) : generate_3d(rng, params);
}

geom::PolylineVessel generate_synthetic_vessel(std::uint64_t seed, std::size_t n_points) {
  Rng rng(nn::derive_seed(seed, 0xA5C0ULL));
  const bool helix = rng.uniform() < 0.5;
  const double length = rng.uniform(2.5, 40.0);
  std::vector<Vec3> local(n_points);
  if (helix) {
    const double turns = rng.uniform(0.4, 1.4);
    const double pitch_angle = rng.uniform(0.25, 0.9);  // radians between tangent and axis-normal plane
    const double radius = length * std::cos(pitch_angle) / (2 * kPi * turns);
    const double height = length * std::sin(pitch_angle);
    for (std::size_t i = 0; i < n_points; ++i) {
      const double s = static_cast<double>(i) / (n_points - 1);
      const double th = 2 * kPi * turns * s;
      local[i] = {radius * std::cos(th), radius * std::sin(th), height * s};
    }
  } else {
    const double sweep = rng.uniform(0.3, 1.6 * kPi / 2);
    const double radius = length / sweep;
    for (std::size_t i = 0; i < n_points; ++i) {
      const double th = sweep * static_cast<double>(i) / (n_points - 1);
      local[i] = {radius * std::sin(th), radius * (1 - std::cos(th)), 0.0};
    }
  }
  // Random orientation and offset.
  const Vec3 ex = random_unit(rng);
  const Vec3 ey = random_perpendicular(ex, rng);
  const Vec3 ez = cross(ex, ey);
  const Vec3 offset{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20)};
  const double ra = rng.uniform(1.0, 3.0), rb = ra * rng.uniform(0.5, 1.0);
  geom::PolylineVessel v;
  v.points.resize(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double s = static_cast<double>(i) / (n_points - 1);
    const Vec3 q = offset + local[i][0] * ex + local[i][1] * ey + local[i][2] * ez;
    v.points[i] = {q[0], q[1], q[2], ra + (rb - ra) * s};
  }
  return v;
}

double edge_arc_length(const VesselTree& tree, const TreeEdge& e) {
  if (e.polyline) return polyline_length(e.polyline->points);
  const auto& a = tree.node(e.parent).pos;
  const auto& b = tree.node(e.child).pos;
  return norm(b - a);
}

VesselTree mark_skip_vessels(VesselTree tree, double threshold) {
  for (auto& e : tree.edges) e.skip = edge_arc_length(tree, e) <= threshold;
  return tree;
}

std::vector<VesselTree> sample_subtree(const VesselTree& tree, double max_arc, std::size_t count,
                                       std::uint64_t seed) {
  std::vector<NodeId> candidates;
  for (NodeId id : tree.bfs_order())
    if (tree.n_children(id) > 0) candidates.push_back(id);
  Rng rng(nn::derive_seed(seed, 0x5B7ULL));
  for (std::size_t i = candidates.size(); i > 1; --i) std::swap(candidates[i - 1], candidates[rng.index(i)]);

  std::vector<VesselTree> out;
  for (NodeId start : candidates) {
    if (out.size() >= count) break;
    VesselTree sub;
    sub.dims = tree.dims;
    NodeId next_id = 0;
    for (const auto& n : tree.nodes) next_id = std::max(next_id, n.id + 1);
    sub.insert_node(tree.node(start));
    sub.root = start;
    std::deque<std::pair<NodeId, double>> queue{{start, 0.0}};
    while (!queue.empty()) {
      const auto [id, arc] = queue.front();
      queue.pop_front();
      for (const auto& e : tree.edges) {
        if (e.parent != id) continue;
        const double len = edge_arc_length(tree, e);
        if (arc + len <= max_arc) {
          sub.insert_node(tree.node(e.child));
          sub.edges.push_back(e);
          queue.emplace_back(e.child, arc + len);
        } else if (max_arc - arc > 1e-9) {
          TreeEdge cut = e;
          TreeNode leaf;
          leaf.id = next_id++;
          if (e.polyline) {
            cut.polyline->points = cut_polyline(e.polyline->points, max_arc - arc);
            const auto& q = cut.polyline->points.back();
            leaf.pos = {q[0], q[1], q[2]};
            leaf.r = q[3];
          } else {
            const auto& a = tree.node(e.parent).pos;
            const auto& b = tree.node(e.child).pos;
            const double w = (max_arc - arc) / len;
            leaf.pos = a + w * (b - a);
            leaf.r = tree.node(e.child).r;
          }
          cut.child = leaf.id;
          sub.insert_node(leaf);
          sub.edges.push_back(cut);
        }
      }
    }
    if (sub.edges.size() < 3 || sub.bifurcation_count() == 0) continue;
    out.push_back(mark_skip_vessels(std::move(sub)));
  }
  return out;
}

}  // namespace vetta::tree
