#include "vetta/tree/features.hpp"

#include <set>

namespace vetta::tree {

ModelFrame ModelFrame::unit_square() { return ModelFrame{2, {0.5, 0.5, 0.0}, 0.4}; }

ModelFrame ModelFrame::fit(const VesselTree& tree) { return fit_all({tree}); }

ModelFrame ModelFrame::fit_all(const std::vector<VesselTree>& trees) {
  Vec3 lo{INFINITY, INFINITY, INFINITY}, hi{-INFINITY, -INFINITY, -INFINITY};
  auto grow = [&](double x, double y, double z) {
    const Vec3 p{x, y, z};
    for (int c = 0; c < 3; ++c) {
      lo[c] = std::min(lo[c], p[c]);
      hi[c] = std::max(hi[c], p[c]);
    }
  };
  bool any = false;
  int dims = trees.empty() ? 3 : trees.front().dims;
  for (const auto& tree : trees) {
    if (tree.dims != dims) throw TreeError("frame fit: mixed 2D and 3D trees");
    any = any || !tree.nodes.empty();
    for (const auto& n : tree.nodes) grow(n.pos[0], n.pos[1], n.pos[2]);
    for (const auto& e : tree.edges)
      if (e.polyline)
        for (const auto& p : e.polyline->points) grow(p[0], p[1], p[2]);
  }
  ModelFrame f;
  f.dims = dims;
  if (!any) {
    f.center = {0, 0, 0};
    f.scale = 1.0;
    return f;
  }
  double side = 0;
  for (int c = 0; c < 3; ++c) {
    f.center[c] = 0.5 * (lo[c] + hi[c]);
    side = std::max(side, hi[c] - lo[c]);
  }
  f.scale = side > 0 ? 0.5 / side : 1.0;
  return f;
}

Vec3 ModelFrame::to_model(const Vec3& p) const {
  return {(p[0] - center[0]) * scale, (p[1] - center[1]) * scale, dims == 3 ? (p[2] - center[2]) * scale : 0.0};
}

Vec3 ModelFrame::from_model(const Vec3& m) const {
  return {m[0] / scale + center[0], m[1] / scale + center[1], dims == 3 ? m[2] / scale + center[2] : 0.0};
}

std::size_t EdgeFeatures::active() const {
  std::size_t n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

namespace {

struct RowWriter {
  const VesselTree& tree;
  const ModelFrame& frame;
  const FeaturizeOptions& opts;
  EdgeFeatures& out;

  int children_of(NodeId id) const {
    if (opts.declared_children) {
      auto it = opts.declared_children->find(id);
      if (it != opts.declared_children->end()) return it->second;
    }
    return tree.n_children(id);
  }

  void lift_node(NodeId id, double* dst) const {
    const Vec3 m = frame.to_model(tree.node(id).pos);
    geom::lift_fourier_into(std::span<const double>(m.data(), static_cast<std::size_t>(tree.dims)), opts.fourier,
                            std::span<double>(dst, out.layout.pos_width()));
  }

  void write(RowKind kind, NodeId parent, NodeId child, const TreeEdge* edge) {
    const auto& L = out.layout;
    const std::size_t base = out.data.size();
    out.data.resize(base + L.width(), 0.0);
    out.mask.push_back(1);
    out.rows.push_back({kind, parent, child});
    if (kind == RowKind::start_token) return;
    double* row = out.data.data() + base;
    lift_node(parent, row + L.pa());
    lift_node(child, row + L.pb());
    const int ta = children_of(parent), tb = children_of(child);
    if (ta < 0 || ta > 2 || tb < 0 || tb > 2) throw TreeError("child count outside {0, 1, 2}");
    row[L.ta() + topology_index(ta)] = 1.0;
    row[L.tb() + topology_index(tb)] = 1.0;
    if (L.has_query() && opts.query && *opts.query == child) row[L.query()] = 1.0;
    if (L.has_radius()) {
      row[L.ra()] = log_radius(tree.node(parent).r.value_or(1.0));
      row[L.rb()] = log_radius(tree.node(child).r.value_or(1.0));
    }
    const bool skip = edge && edge->skip;
    if (L.has_embedding() && edge && !skip && opts.embeddings) {
      auto it = opts.embeddings->find(child);
      if (it != opts.embeddings->end()) {
        if (it->second.size() != kVesselEmbeddingDim) throw TreeError("vessel embedding must have 64 entries");
        std::copy(it->second.begin(), it->second.end(), row + L.zv());
      }
    }
    if (L.has_skip()) row[L.skip()] = skip ? 1.0 : 0.0;
  }
};

}  // namespace

EdgeFeatures featurize_edges(const VesselTree& tree, const ModelFrame& frame, const FeaturizeOptions& opts) {
  EdgeFeatures out;
  out.layout.dims = tree.dims;
  out.layout.fourier = opts.fourier;
  out.layout.mode = opts.mode;
  const bool partial = opts.mode == FeatureMode::partial;
  if (partial) {
    if (!tree.empty() && !opts.query) throw TreeError("partial features need a query node");
    if (opts.query && !tree.has_node(*opts.query))
      throw TreeError("query node " + std::to_string(*opts.query) + " is not in the tree");
  } else {
    if (tree.empty()) throw TreeError("full features need a non-empty tree");
    if (opts.query) throw TreeError("full features take no query node");
  }
  RowWriter w{tree, frame, opts, out};
  if (partial) w.write(RowKind::start_token, -1, -1, nullptr);
  if (!tree.empty()) {
    w.write(RowKind::semi_edge, tree.root, tree.root, nullptr);
    for (const auto& e : tree.edges) w.write(RowKind::edge, e.parent, e.child, &e);
  }
  return out;
}

EdgeFeatures filter_non_proximal(EdgeFeatures f, const VesselTree& tree, NodeId query) {
  if (f.layout.mode != FeatureMode::partial) throw TreeError("non-proximal filtering applies to partial features");
  const auto path = tree.path_from_root(query);
  const std::set<NodeId> on_path(path.begin(), path.end());
  for (std::size_t i = 0; i < f.rows.size(); ++i)
    if (f.rows[i].kind == RowKind::edge && !on_path.count(f.rows[i].child)) f.mask[i] = 0;
  return f;
}

EdgeFeatures strip_partial_extras(const EdgeFeatures& f) {
  if (f.layout.mode != FeatureMode::partial || f.layout.dims != 3 || f.layout.stripped) return f;
  EdgeFeatures out;
  out.layout = f.layout;
  out.layout.stripped = true;
  out.mask = f.mask;
  out.rows = f.rows;
  const auto& src = f.layout;
  const auto& dst = out.layout;
  out.data.assign(f.rows.size() * dst.width(), 0.0);
  for (std::size_t r = 0; r < f.rows.size(); ++r) {
    const double* a = f.row(r);
    double* b = out.data.data() + r * dst.width();
    std::copy(a, a + src.ra(), b);  // positions, topology, query flag
    b[dst.skip()] = a[src.skip()];
  }
  return out;
}

}  // namespace vetta::tree
