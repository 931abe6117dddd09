#include <cmath>
#include <deque>
#include <set>

#include "doctest.h"
#include "vetta/nn/rng.hpp"
#include "vetta/tree/augment.hpp"
#include "vetta/tree/features.hpp"
#include "vetta/tree/io.hpp"
#include "vetta/tree/synth.hpp"

using namespace vetta::tree;

namespace {

// Root (0.5, 0.1) -> 1 (0.5, 0.4) -> {2 (0.3, 0.7), 3 (0.7, 0.7)}; 3 -> 4 (0.8, 0.9).
VesselTree small_tree() {
  VesselTree t;
  t.dims = 2;
  t.add_node({0.5, 0.1, 0});
  t.add_node({0.5, 0.4, 0});
  t.add_node({0.3, 0.7, 0});
  t.add_node({0.7, 0.7, 0});
  t.add_node({0.8, 0.9, 0});
  t.add_edge(0, 1);
  t.add_edge(1, 2);
  t.add_edge(1, 3);
  t.add_edge(3, 4);
  return t;
}

VesselTree chain3d(int n, double seg_len) {
  VesselTree t;
  t.dims = 3;
  t.add_node({0, 0, 0}, 2.0);
  for (int i = 1; i < n; ++i) {
    t.add_node({0, 0, seg_len * i}, 2.0);
    vetta::geom::PolylineVessel v;
    for (int k = 0; k <= 10; ++k) v.points.push_back({0, 0, seg_len * (i - 1 + k / 10.0), 2.0});
    t.add_edge(i - 1, i, v);
  }
  return t;
}

// Independent root-to-node path search by breadth-first search from the root.
std::set<NodeId> bfs_path(const VesselTree& t, NodeId target) {
  std::map<NodeId, NodeId> up;
  std::deque<NodeId> q{t.root};
  while (!q.empty()) {
    NodeId id = q.front();
    q.pop_front();
    for (const auto& e : t.edges)
      if (e.parent == id) {
        up[e.child] = id;
        q.push_back(e.child);
      }
  }
  std::set<NodeId> path{target};
  while (target != t.root) path.insert(target = up.at(target));
  return path;
}

}  // namespace

TEST_CASE("tree validation") {
  auto t = small_tree();
  CHECK(is_valid_tree(t));
  CHECK(t.n_children(1) == 2);
  CHECK(t.path_from_root(4) == std::vector<NodeId>{0, 1, 3, 4});

  auto bad = t;
  bad.add_edge(2, 1);
  std::string why;
  CHECK_FALSE(is_valid_tree(bad, &why));

  auto three = t;
  three.add_node({0.1, 0.1, 0});
  three.add_edge(1, 5);
  CHECK_FALSE(is_valid_tree(three, &why));
  CHECK(why.find("more than 2") != std::string::npos);

  auto cyc = t;
  cyc.edges[0] = TreeEdge{4, 1, std::nullopt, false};
  CHECK_FALSE(is_valid_tree(cyc));

  CHECK_THROWS_AS(t.insert_node(TreeNode{2, {0, 0, 0}, {}}), TreeError);
}

TEST_CASE("synthetic generation") {
  SynthParams p;
  p.depth = 1;
  auto lone = generate_synthetic_tree(1, p);
  CHECK(lone.nodes.size() == 1);
  CHECK(lone.edges.empty());

  p.depth = 4;
  CHECK(trees_equal(generate_synthetic_tree(9, p), generate_synthetic_tree(9, p)));
  std::size_t ok = 0, nontrivial = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    auto t = generate_synthetic_tree(s, p);
    ok += is_valid_tree(t);
    nontrivial += t.bifurcation_count() > 0;
    for (const auto& n : t.nodes) {
      CHECK(n.pos[0] >= 0.0);
      CHECK(n.pos[0] <= 1.0);
      CHECK(n.pos[1] >= 0.0);
      CHECK(n.pos[1] <= 1.0);
    }
  }
  CHECK(ok == 1000);
  CHECK(nontrivial > 300);

  SynthParams p3;
  p3.dims = 3;
  p3.depth = 5;
  std::size_t ok3 = 0, shorts = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto t = mark_skip_vessels(generate_synthetic_tree(s, p3));
    ok3 += is_valid_tree(t);
    for (const auto& e : t.edges) {
      REQUIRE(e.polyline.has_value());
      shorts += e.skip;
      const auto& a = t.node(e.parent).pos;
      CHECK(e.polyline->points.front()[0] == a[0]);
    }
  }
  CHECK(ok3 == 200);
  CHECK(shorts > 0);
}

TEST_CASE("json round trip and schema errors") {
  SynthParams p3;
  p3.dims = 3;
  p3.depth = 4;
  auto t = mark_skip_vessels(generate_synthetic_tree(4, p3));
  auto text = save_tree_json(t);
  auto back = load_tree_json(text);
  CHECK(trees_equal(t, back));
  CHECK(save_tree_json(back) == text);

  auto t2 = small_tree();
  CHECK(trees_equal(t2, load_tree_json(save_tree_json(t2))));

  auto expect_error = [](const std::string& doc, const std::string& fragment) {
    try {
      load_tree_json(doc);
      FAIL("expected a format error");
    } catch (const TreeFormatError& e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect_error(R"({"version":"vetta-tree/1","dims":2,"nodes":[],"edges":[]})", "$.root");
  expect_error(
      R"({"version":"vetta-tree/1","dims":2,"root":0,"nodes":[{"id":0,"pos":[0,0]},{"id":0,"pos":[1,1]}],"edges":[]})",
      "$.nodes[1].id");
  expect_error(R"({"version":"vetta-tree/1","dims":2,"root":0,"nodes":[{"id":0,"pos":[0]}],"edges":[]})",
               "$.nodes[0].pos");
  expect_error(R"({"version":"other","dims":2,"root":0,"nodes":[],"edges":[]})", "$.version");
  expect_error("{", "$");

  auto svg = tree_to_svg(t2);
  CHECK(svg.find("viewBox=\"0 0 512 512\"") != std::string::npos);
  CHECK(svg.find("256.000,460.800") != std::string::npos);
}

TEST_CASE("skip marking") {
  VesselTree t;
  t.dims = 3;
  t.add_node({0, 0, 0}, 1.0);
  t.add_node({0, 0, 2.4}, 1.0);
  t.add_node({0, 0, 12.4}, 1.0);
  t.add_edge(0, 1, vetta::geom::PolylineVessel{{{0, 0, 0, 1}, {0, 0, 2.4, 1}}});
  t.add_edge(1, 2, vetta::geom::PolylineVessel{{{0, 0, 2.4, 1}, {0, 0, 12.4, 1}}});
  auto m = mark_skip_vessels(t);
  CHECK(m.edges[0].skip);
  CHECK_FALSE(m.edges[1].skip);
  auto z = mark_skip_vessels(t, 0.0);
  CHECK_FALSE(z.edges[0].skip);
  CHECK_FALSE(z.edges[1].skip);
}

TEST_CASE("subtree sampling") {
  CHECK(sample_subtree(chain3d(8, 5.0), 60.0, 10, 1).empty());

  SynthParams p3;
  p3.dims = 3;
  p3.depth = 6;
  std::size_t total = 0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    auto t = generate_synthetic_tree(s, p3);
    auto subs = sample_subtree(t, 60.0, 10, s);
    CHECK(subs.size() <= 10);
    for (const auto& sub : subs) {
      ++total;
      CHECK(is_valid_tree(sub));
      CHECK(sub.edges.size() >= 3);
      CHECK(sub.bifurcation_count() > 0);
      // Root-to-leaf arc length stays within the cap.
      std::map<NodeId, double> arc{{sub.root, 0.0}};
      for (NodeId id : sub.bfs_order())
        for (const auto& e : sub.edges)
          if (e.parent == id) arc[e.child] = arc[id] + edge_arc_length(sub, e);
      for (const auto& [id, a] : arc) CHECK(a <= 60.0 + 1e-9);
    }
  }
  CHECK(total > 0);

  // A cap beyond the whole tree returns the full subtree of the chosen node.
  auto t = generate_synthetic_tree(3, p3);
  auto subs = sample_subtree(t, 1e9, 1000, 7);
  for (const auto& sub : subs) {
    std::set<NodeId> expect;
    std::deque<NodeId> q{sub.root};
    while (!q.empty()) {
      expect.insert(q.front());
      for (NodeId c : t.children(q.front())) q.push_back(c);
      q.pop_front();
    }
    CHECK(sub.nodes.size() == expect.size());
    for (const auto& n : sub.nodes) CHECK(expect.count(n.id) == 1);
  }
}

TEST_CASE("edge featurization") {
  auto t = small_tree();
  const auto frame = ModelFrame::unit_square();
  FeaturizeOptions full;
  auto f = featurize_edges(t, frame, full);
  CHECK(f.layout.width() == 54);
  CHECK(f.n_rows() == 5);
  CHECK(f.rows[0].kind == RowKind::semi_edge);
  // Row for edge 3 -> 4: tb is a leaf, ta has one child.
  const double* r = f.row(4);
  CHECK(r[f.layout.tb() + 0] == 0.0);
  CHECK(r[f.layout.tb() + 2] == 1.0);
  CHECK(r[f.layout.ta() + 1] == 1.0);
  // Edge 0 -> 1 ends at a bifurcation.
  CHECK(f.row(1)[f.layout.tb() + 0] == 1.0);
  for (std::size_t i = 0; i < f.n_rows(); ++i) {
    double s = 0;
    for (int k = 0; k < 3; ++k) s += f.row(i)[f.layout.ta() + k];
    CHECK(s == 1.0);
  }
  // Positions are lifted in the model frame.
  auto m = frame.to_model({0.5, 0.1, 0});
  auto lifted = vetta::geom::lift_fourier(std::vector<double>{m[0], m[1]}, full.fourier);
  for (std::size_t k = 0; k < lifted.size(); ++k) CHECK(f.row(0)[k] == lifted[k]);

  FeaturizeOptions part;
  part.mode = FeatureMode::partial;
  auto empty = featurize_edges(VesselTree{}, frame, part);
  CHECK(empty.n_rows() == 1);
  CHECK(empty.rows[0].kind == RowKind::start_token);

  part.query = 3;
  auto pf = featurize_edges(t, frame, part);
  CHECK(pf.layout.width() == 55);
  CHECK(pf.n_rows() == 6);
  for (std::size_t i = 0; i < pf.n_rows(); ++i)
    CHECK(pf.row(i)[pf.layout.query()] == (pf.rows[i].child == 3 && pf.rows[i].kind == RowKind::edge ? 1.0 : 0.0));

  part.query = 0;
  auto rootq = featurize_edges(t, frame, part);
  CHECK(rootq.row(1)[rootq.layout.query()] == 1.0);

  part.query = 42;
  CHECK_THROWS(featurize_edges(t, frame, part));
  full.query = 1;
  CHECK_THROWS(featurize_edges(t, frame, full));
}

TEST_CASE("non-proximal filtering") {
  auto t = small_tree();
  const auto frame = ModelFrame::unit_square();
  FeaturizeOptions part;
  part.mode = FeatureMode::partial;
  part.query = 2;
  auto f = filter_non_proximal(featurize_edges(t, frame, part), t, 2);
  for (std::size_t i = 0; i < f.n_rows(); ++i) {
    if (f.rows[i].kind != RowKind::edge) {
      CHECK(f.mask[i] == 1);
    } else {
      CHECK(f.mask[i] == (f.rows[i].child == 1 || f.rows[i].child == 2));
    }
  }

  // Compare against an independent path search over random trees.
  SynthParams p;
  p.depth = 5;
  vetta::nn::Rng rng(1);
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto g = generate_synthetic_tree(s, p);
    const NodeId q = g.nodes[rng.index(g.nodes.size())].id;
    part.query = q;
    auto ff = filter_non_proximal(featurize_edges(g, frame, part), g, q);
    const auto path = bfs_path(g, q);
    for (std::size_t i = 0; i < ff.n_rows(); ++i)
      if (ff.rows[i].kind == RowKind::edge) CHECK(ff.mask[i] == path.count(ff.rows[i].child));
  }

  // Chain with the leaf as query keeps everything.
  auto c = chain3d(5, 3.0);
  part.query = 4;
  auto cf = filter_non_proximal(featurize_edges(c, ModelFrame::fit(c), part), c, 4);
  CHECK(cf.active() == cf.n_rows());
}

TEST_CASE("3D layouts and stripping") {
  auto t = mark_skip_vessels(chain3d(4, 5.0));
  t.edges[1].skip = true;
  EmbeddingMap emb;
  for (NodeId id = 1; id < 4; ++id) emb[id] = std::vector<double>(64, 0.5 * static_cast<double>(id));
  const auto frame = ModelFrame::fit(t);
  FeaturizeOptions full;
  full.embeddings = &emb;
  auto f = featurize_edges(t, frame, full);
  CHECK(f.layout.width() == 145);
  CHECK(f.row(1)[f.layout.zv()] == 0.5);
  CHECK(f.row(2)[f.layout.zv()] == 0.0);  // skip edges carry no embedding
  CHECK(f.row(2)[f.layout.skip()] == 1.0);
  CHECK(f.row(1)[f.layout.ra()] == doctest::Approx(std::log(2.0)));
  CHECK(strip_partial_extras(f).data == f.data);

  FeaturizeOptions part = full;
  part.mode = FeatureMode::partial;
  part.query = 3;
  auto pf = featurize_edges(t, frame, part);
  CHECK(pf.layout.width() == 146);
  auto sf = strip_partial_extras(pf);
  CHECK(sf.layout.width() == 146 - 66);
  for (std::size_t i = 0; i < sf.n_rows(); ++i) {
    for (std::size_t k = 0; k < sf.layout.skip(); ++k) CHECK(sf.row(i)[k] == pf.row(i)[k]);
    CHECK(sf.row(i)[sf.layout.skip()] == pf.row(i)[pf.layout.skip()]);
  }
  // Frame maps the tree into [-0.25, 0.25].
  for (const auto& n : t.nodes)
    for (double c : frame.to_model(n.pos)) CHECK(std::abs(c) <= 0.25 + 1e-12);
}

TEST_CASE("featurization is stable under relabeling") {
  SynthParams p;
  p.depth = 5;
  auto t = generate_synthetic_tree(77, p);
  VesselTree r = t;
  auto relabel = [](NodeId id) { return 100 - 3 * id; };
  for (auto& n : r.nodes) n.id = relabel(n.id);
  for (auto& e : r.edges) {
    e.parent = relabel(e.parent);
    e.child = relabel(e.child);
  }
  r.root = relabel(r.root);
  std::reverse(r.edges.begin(), r.edges.end());
  const auto frame = ModelFrame::unit_square();
  auto a = featurize_edges(t, frame, {});
  auto b = featurize_edges(r, frame, {});
  auto rows_of = [](const EdgeFeatures& f) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < f.n_rows(); ++i) rows.emplace_back(f.row(i), f.row(i) + f.layout.width());
    std::sort(rows.begin(), rows.end());
    return rows;
  };
  CHECK(rows_of(a) == rows_of(b));
}

TEST_CASE("augmentations") {
  auto t = small_tree();
  GlobalAugment id;
  id.center = {0.5, 0.5, 0};
  CHECK(trees_equal(apply_global_augment(t, id), t, 1e-15));

  for (std::uint64_t s = 0; s < 10000; ++s) {
    auto a = draw_global_augment(t, s);
    REQUIRE(a.angle_deg >= -45.0);
    REQUIRE(a.angle_deg <= 45.0);
    REQUIRE(a.zoom >= 0.75);
    REQUIRE(a.zoom <= 1.5);
  }

  auto t3 = generate_synthetic_tree(2, SynthParams{.dims = 3, .depth = 4});
  auto a3 = draw_global_augment(t3, 5);
  auto g3 = apply_global_augment(t3, a3);
  CHECK(is_valid_tree(g3));
  // Rotation is orthonormal, so edge lengths scale by the zoom.
  const auto& e = t3.edges[0];
  const double before = edge_arc_length(t3, e), after = edge_arc_length(g3, g3.edges[0]);
  CHECK(after == doctest::Approx(before * a3.zoom).epsilon(1e-9));
  CHECK(*g3.nodes[0].r == doctest::Approx(*t3.nodes[0].r * a3.zoom));

  std::vector<Vec3> pos(50000, Vec3{0.1, 0.2, 0.3});
  CHECK(augment_jitter(pos, 3, 0.0) == pos);
  auto j = augment_jitter(pos, 3, 0.005, 2);
  double s = 0, ss = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    CHECK(j[i][2] == 0.3);
    for (int c = 0; c < 2; ++c) {
      const double d = j[i][c] - pos[i][c];
      s += d;
      ss += d * d;
      ++n;
    }
  }
  const double sd = std::sqrt(ss / n - (s / n) * (s / n));
  CHECK(sd >= 0.0049);
  CHECK(sd <= 0.0051);
}
