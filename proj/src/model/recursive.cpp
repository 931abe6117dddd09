#include "vetta/model/recursive.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace vetta::model {

std::vector<ChildPrediction> slots_to_children(const TreeAeConfig& cfg, const std::vector<double>& slots,
                                               std::size_t k) {
  const match::SlotLayout lay = cfg.slot_layout();
  const std::size_t w = lay.width();
  if (slots.size() % w != 0) throw std::invalid_argument("slots_to_children: slot buffer size mismatch");
  for (double v : slots)
    if (!std::isfinite(v)) throw nn::NumericalError("slots_to_children: non-finite slot prediction");
  const auto clusters = match::cluster_slots(slots, slots.size() / w, w, k);
  const geom::FourierInverter inverter(cfg.fourier, geom::Interval{});
  std::vector<ChildPrediction> out;
  for (const auto& mean : clusters.means) {
    ChildPrediction c;
    const auto m = inverter.invert(std::span<const double>(mean.data() + lay.pos(), lay.pos_width()));
    tree::Vec3 model_pos{0, 0, 0};
    for (std::size_t a = 0; a < m.size(); ++a) model_pos[a] = m[a];
    c.pos = cfg.frame.from_model(model_pos);
    if (cfg.dims == 2) c.pos[2] = 0.0;
    const auto topo = mean.begin() + static_cast<std::ptrdiff_t>(lay.topo());
    c.n_children = 2 - static_cast<int>(std::max_element(topo, topo + 3) - topo);
    if (cfg.dims == 3) {
      c.r = std::exp(mean[lay.log_r()]);
      c.skip = mean[lay.skip()] > 0.5;
      if (!c.skip) c.zv.assign(mean.begin() + static_cast<std::ptrdiff_t>(lay.zv()),
                               mean.begin() + static_cast<std::ptrdiff_t>(lay.skip()));
    }
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(), [](const ChildPrediction& a, const ChildPrediction& b) {
    return a.pos[0] != b.pos[0] ? a.pos[0] < b.pos[0] : a.pos[1] < b.pos[1];
  });
  return out;
}

std::vector<ChildPrediction> expand_query(const TreeAe& model, nn::ParamStore<float>& ps,
                                          const tree::VesselTree& partial, const tree::ChildCountMap& declared,
                                          std::optional<tree::NodeId> query, const std::vector<double>& z_t,
                                          std::size_t k) {
  const TreeAeConfig& cfg = model.config();
  if (z_t.size() != cfg.z_dim) throw std::invalid_argument("expand_query: z_t has the wrong size");
  for (double v : z_t)
    if (!std::isfinite(v)) throw std::invalid_argument("expand_query: z_t is not finite");
  if (query && !partial.has_node(*query)) throw std::invalid_argument("expand_query: query not in the partial tree");
  if (!query && !partial.empty()) throw std::invalid_argument("expand_query: root step needs an empty partial tree");
  tree::FeaturizeOptions po;
  po.mode = tree::FeatureMode::partial;
  po.query = query;
  po.declared_children = &declared;
  po.fourier = cfg.fourier;
  auto f = tree::featurize_edges(partial, cfg.frame, po);
  if (query) f = tree::filter_non_proximal(std::move(f), partial, *query);
  f = tree::strip_partial_extras(f);

  nn::NoGradGuard ng;
  nn::Tensor<float> z({1, cfg.z_dim});
  for (std::size_t q = 0; q < cfg.z_dim; ++q) z[q] = static_cast<float>(z_t[q]);
  const auto pb = pack_edges<float>({f});
  const auto s = model.decode_slots(ps, model.memory(ps, pb, nn::constant(z)), pb.mask);
  const std::vector<double> slots(s.value().data.begin(), s.value().data.end());
  return slots_to_children(cfg, slots, k);
}

geom::PolylineVessel reconstruct_edge_geometry(const geom::Point4& a, const geom::Point4& b,
                                               const std::vector<double>& z_v, bool skip,
                                               const VesselDecoder* vessel, std::size_t samples,
                                               std::vector<std::string>* warnings) {
  if (samples < 2) throw std::invalid_argument("reconstruct_edge_geometry: need at least 2 samples");
  geom::Point4 end = b;
  double len = geom::distance3(a, b);
  bool straight = skip || !vessel || !vessel->model || z_v.empty();
  if (!(len > 1e-9)) {
    if (warnings) warnings->push_back("coincident edge endpoints replaced by a short straight stub");
    end = a;
    end[0] += 1e-6;
    len = 1e-6;
    straight = true;
  }
  std::vector<double> ts(samples);
  for (std::size_t i = 0; i < samples; ++i) ts[i] = static_cast<double>(i) / static_cast<double>(samples - 1);
  geom::PolylineVessel out;
  if (straight) {
    for (double t : ts) {
      geom::Point4 p;
      for (std::size_t c = 0; c < 4; ++c) p[c] = a[c] + (end[c] - a[c]) * t;
      out.points.push_back(p);
    }
    return out;
  }
  const double ra = a[3] > 0 ? a[3] : 1.0;
  geom::VesselTransform tf;
  tf.translation = {a[0], a[1], a[2]};
  tf.scale_pos = len;
  tf.scale_r = ra;
  const geom::Point4 na{0, 0, 0, 1.0};
  const geom::Point4 nb{(end[0] - a[0]) / len, (end[1] - a[1]) / len, (end[2] - a[2]) / len,
                        end[3] > 0 ? end[3] / ra : 1.0};
  for (const auto& p : decode_vessel(*vessel->model, *vessel->params, z_v, na, nb, ts, geom::MaskMode::eval)) {
    geom::Point4 q = geom::denormalize_point(p, tf);
    if (!(q[3] > 0)) q[3] = tree::kMinRadius;
    out.points.push_back(q);
  }
  out.points.front() = a;
  out.points.back() = end;
  return out;
}

DecodeResult decode_tree(const TreeAe& model, nn::ParamStore<float>& ps, const std::vector<double>& z_t,
                         const VesselDecoder* vessel, const DecodeLimits& limits) {
  if (limits.max_nodes < 1) throw std::invalid_argument("decode_tree: max_nodes must be positive");
  const TreeAeConfig& cfg = model.config();
  DecodeResult res;
  tree::VesselTree& t = res.tree;
  t.dims = cfg.dims;
  tree::ChildCountMap declared;
  std::map<tree::NodeId, std::vector<double>> zv;
  std::deque<tree::NodeId> queue;

  const auto root = expand_query(model, ps, t, declared, std::nullopt, z_t, 1).front();
  t.root = t.add_node(root.pos, root.r);
  declared[t.root] = root.n_children;
  if (root.n_children > 0) queue.push_back(t.root);
  res.steps = 1;

  while (!queue.empty()) {
    tree::NodeId q;
    if (limits.order == ExpansionOrder::fifo) {
      q = queue.front();
      queue.pop_front();
    } else {
      q = queue.back();
      queue.pop_back();
    }
    const auto kids =
        expand_query(model, ps, t, declared, q, z_t, static_cast<std::size_t>(declared.at(q)));
    ++res.steps;
    for (const auto& c : kids) {
      if (t.nodes.size() >= limits.max_nodes) {
        res.truncated = true;
        break;
      }
      const tree::NodeId id = t.add_node(c.pos, c.r);
      t.add_edge(q, id, std::nullopt, c.skip);
      declared[id] = c.n_children;
      if (!c.zv.empty()) zv[id] = c.zv;
      if (c.n_children > 0) queue.push_back(id);
    }
    if (res.truncated) break;
  }
  if (res.truncated) res.warnings.push_back("max_nodes reached; tree truncated");

  if (cfg.dims == 3) {
    for (auto& e : t.edges) {
      const auto& pa = t.node(e.parent);
      const auto& pb = t.node(e.child);
      const geom::Point4 a{pa.pos[0], pa.pos[1], pa.pos[2], pa.r.value_or(1.0)};
      const geom::Point4 b{pb.pos[0], pb.pos[1], pb.pos[2], pb.r.value_or(1.0)};
      const auto it = zv.find(e.child);
      e.polyline = reconstruct_edge_geometry(a, b, it == zv.end() ? std::vector<double>{} : it->second, e.skip,
                                             vessel, limits.edge_samples, &res.warnings);
    }
  }
  tree::validate_tree(t);
  return res;
}

DecodeResult reconstruct_tree(const TreeAe& model, nn::ParamStore<float>& ps, const tree::VesselTree& input,
                              const tree::EmbeddingMap* embeddings, const VesselDecoder* vessel,
                              const DecodeLimits& limits) {
  return decode_tree(model, ps, encode_tree(model, ps, input, embeddings), vessel, limits);
}

}  // namespace vetta::model
