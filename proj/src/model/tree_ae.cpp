#include "vetta/model/tree_ae.hpp"

#include <algorithm>
#include <cmath>

namespace vetta::model {

using nlohmann::json;

void TreeAeConfig::validate() const {
  fourier.validate();
  if (dims != 2 && dims != 3) throw ConfigError("tree config: dims must be 2 or 3");
  if (heads == 0 || head_dim == 0 || encoder_layers == 0 || partial_layers == 0 || decoder_layers == 0)
    throw ConfigError("tree config: layer counts and sizes must be positive");
  if (edge_hidden == 0 || pool_hidden == 0 || predictor_hidden == 0 || z_dim == 0)
    throw ConfigError("tree config: hidden sizes must be positive");
  if (k == 0) throw ConfigError("tree config: k must be positive");
  if (slots < k * match::kTargetCapacity)
    throw ConfigError("tree config: slots must be at least k * " + std::to_string(match::kTargetCapacity));
  if (!(kl_weight >= 0)) throw ConfigError("tree config: kl_weight must be non-negative");
  if (!(jitter >= 0)) throw ConfigError("tree config: jitter must be non-negative");
  if (max_nodes < 1) throw ConfigError("tree config: max_nodes must be positive");
  if (frame.dims != dims) throw ConfigError("tree config: frame dims do not match");
  if (!(frame.scale > 0) || !std::isfinite(frame.scale)) throw ConfigError("tree config: frame scale must be positive");
}

tree::FeatureLayout TreeAeConfig::full_layout() const {
  tree::FeatureLayout l;
  l.dims = dims;
  l.fourier = fourier;
  l.mode = tree::FeatureMode::full;
  return l;
}

tree::FeatureLayout TreeAeConfig::partial_layout() const {
  tree::FeatureLayout l;
  l.dims = dims;
  l.fourier = fourier;
  l.mode = tree::FeatureMode::partial;
  l.stripped = dims == 3;
  return l;
}

json to_json(const TreeAeConfig& c) {
  return json{{"dims", c.dims},
              {"heads", c.heads},
              {"head_dim", c.head_dim},
              {"encoder_layers", c.encoder_layers},
              {"partial_layers", c.partial_layers},
              {"decoder_layers", c.decoder_layers},
              {"edge_hidden", c.edge_hidden},
              {"pool_hidden", c.pool_hidden},
              {"predictor_hidden", c.predictor_hidden},
              {"z_dim", c.z_dim},
              {"slots", c.slots},
              {"k", c.k},
              {"variational", c.variational},
              {"kl_weight", c.kl_weight},
              {"jitter", c.jitter},
              {"augment", c.augment},
              {"max_nodes", c.max_nodes},
              {"octaves", c.fourier.octaves},
              {"frame", {{"center", c.frame.center}, {"scale", c.frame.scale}}}};
}

TreeAeConfig tree_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("tree config: expected an object");
  TreeAeConfig c;
  try {
    c.dims = j.value("dims", c.dims);
    c.heads = j.value("heads", c.heads);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.partial_layers = j.value("partial_layers", c.partial_layers);
    c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
    c.edge_hidden = j.value("edge_hidden", c.edge_hidden);
    c.pool_hidden = j.value("pool_hidden", c.pool_hidden);
    c.predictor_hidden = j.value("predictor_hidden", c.predictor_hidden);
    c.z_dim = j.value("z_dim", c.z_dim);
    c.slots = j.value("slots", c.slots);
    c.k = j.value("k", c.k);
    c.variational = j.value("variational", c.variational);
    c.kl_weight = j.value("kl_weight", c.kl_weight);
    c.jitter = j.value("jitter", c.jitter);
    c.augment = j.value("augment", c.augment);
    c.max_nodes = j.value("max_nodes", c.dims == 3 ? std::size_t{128} : c.max_nodes);
    c.fourier.octaves = j.value("octaves", c.fourier.octaves);
    if (j.contains("frame")) {
      c.frame.center = j.at("frame").at("center").get<tree::Vec3>();
      c.frame.scale = j.at("frame").at("scale").get<double>();
    } else if (c.dims == 3) {
      c.frame.center = {0, 0, 0};
      c.frame.scale = 1.0;
    }
    c.frame.dims = c.dims;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("tree config: ") + e.what());
  }
  c.validate();
  return c;
}

template <class T>
EdgeBatch<T> pack_edges(const std::vector<tree::EdgeFeatures>& sets) {
  if (sets.empty()) throw std::invalid_argument("pack_edges: empty batch");
  const std::size_t w = sets.front().layout.width();
  std::size_t n = 0;
  for (const auto& s : sets) {
    if (s.layout.width() != w) throw std::invalid_argument("pack_edges: mixed feature layouts");
    n = std::max(n, s.n_rows());
  }
  EdgeBatch<T> out{nn::Tensor<T>({sets.size(), n, w}), std::vector<std::uint8_t>(sets.size() * n, 0)};
  for (std::size_t b = 0; b < sets.size(); ++b) {
    const auto& s = sets[b];
    for (std::size_t q = 0; q < s.data.size(); ++q) out.data[b * n * w + q] = static_cast<T>(s.data[q]);
    for (std::size_t r = 0; r < s.n_rows(); ++r) out.mask[b * n + r] = s.mask[r];
  }
  return out;
}

TreeAe::TreeAe(TreeAeConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t d = cfg_.model_dim();
  full_edge_ = nn::Mlp2("full.edge", cfg_.full_layout().width(), cfg_.edge_hidden, d);
  full_encoder_ = nn::TransformerEncoder("full.encoder", d, cfg_.encoder_layers, cfg_.heads);
  pool_ = nn::Mlp2("full.pool", d, cfg_.pool_hidden, cfg_.variational ? 2 * cfg_.z_dim : cfg_.z_dim);
  partial_edge_ = nn::Mlp2("partial.edge", cfg_.partial_layout().width(), cfg_.edge_hidden, d);
  partial_encoder_ = nn::TransformerEncoder("partial.encoder", d, cfg_.partial_layers, cfg_.heads);
  join_ = nn::Linear("partial.join", d + cfg_.z_dim, d);
  decoder_ = nn::TransformerDecoder("decoder", d, cfg_.decoder_layers, cfg_.heads);
  predictor_ = nn::Mlp2("decoder.predictor", d, cfg_.predictor_hidden, cfg_.slot_layout().width());
}

template <class T>
void TreeAe::init(nn::ParamStore<T>& ps, nn::Rng& rng) const {
  const std::size_t d = cfg_.model_dim();
  full_edge_.init(ps, rng);
  full_encoder_.init(ps, rng);
  pool_.init(ps, rng);
  partial_edge_.init(ps, rng);
  partial_encoder_.init(ps, rng);
  join_.init(ps, rng);
  ps.add_uniform("partial.start_token", {1, d}, -1.0, 1.0, rng);
  ps.add_uniform("decoder.slots", {cfg_.slots, d}, -1.0, 1.0, rng);
  decoder_.init(ps, rng);
  predictor_.init(ps, rng);
}

template <class T>
Encoded<T> TreeAe::encode(nn::ParamStore<T>& ps, const EdgeBatch<T>& full) const {
  if (full.data.rank() != 3 || full.data.dim(2) != cfg_.full_layout().width())
    throw std::invalid_argument("tree encoder: feature width mismatch");
  auto h = full_edge_(ps, nn::constant(full.data));
  h = full_encoder_(ps, h, full.mask);
  auto pooled = pool_(ps, nn::masked_mean(h, full.mask));
  if (!cfg_.variational) return {pooled, {}};
  return {nn::slice_cols(pooled, 0, cfg_.z_dim), nn::slice_cols(pooled, cfg_.z_dim, 2 * cfg_.z_dim)};
}

template <class T>
nn::Var<T> TreeAe::memory(nn::ParamStore<T>& ps, const EdgeBatch<T>& partial, const nn::Var<T>& z) const {
  if (partial.data.rank() != 3 || partial.data.dim(2) != cfg_.partial_layout().width())
    throw std::invalid_argument("partial encoder: feature width mismatch");
  auto h = partial_edge_(ps, nn::constant(partial.data));
  h = nn::overwrite_first_row(h, ps.var("partial.start_token"));
  h = partial_encoder_(ps, h, partial.mask);
  return join_(ps, nn::concat_broadcast(h, z));
}

template <class T>
nn::Var<T> TreeAe::decode_slots(nn::ParamStore<T>& ps, const nn::Var<T>& memory,
                                const std::vector<std::uint8_t>& memory_mask) const {
  const std::size_t batch = memory.value().dim(0);
  auto x = decoder_(ps, nn::tile(ps.var("decoder.slots"), batch), memory, memory_mask);
  auto out = predictor_(ps, x);
  if (cfg_.dims == 3) out = nn::sigmoid_columns(out, {cfg_.slot_layout().skip()});
  return out;
}

template <class T>
Reparameterized<T> reparameterize_and_kl(const nn::Var<T>& mu, const nn::Var<T>& logvar, const nn::Tensor<T>& eps) {
  if (mu.shape() != logvar.shape() || eps.shape != mu.shape())
    throw std::invalid_argument("reparameterize: shape mismatch");
  const auto sigma = nn::exp(nn::scale(logvar, T(0.5)));
  const auto z = nn::add(mu, nn::mul_const(sigma, eps));
  const std::size_t batch = mu.value().rows();
  const auto inner = nn::sub(nn::add(nn::square(mu), nn::exp(logvar)), logvar);
  nn::Tensor<T> minus_n(nn::Shape{}, T(-static_cast<double>(mu.size())));
  const auto kl = nn::scale(nn::add_const(nn::sum(inner), minus_n), T(0.5 / static_cast<double>(batch)));
  return {z, kl};
}

std::vector<std::optional<tree::NodeId>> training_queries(const tree::VesselTree& tree) {
  std::vector<std::optional<tree::NodeId>> out{std::nullopt};
  for (tree::NodeId id : tree.bfs_order())
    if (tree.n_children(id) > 0) out.emplace_back(id);
  return out;
}

namespace {

match::TargetNode target_for(const tree::VesselTree& t, tree::NodeId id, const tree::ModelFrame& frame,
                             const tree::EmbeddingMap* embeddings) {
  match::TargetNode g;
  const auto& n = t.node(id);
  g.pos = frame.to_model(n.pos);
  g.n_children = t.n_children(id);
  g.r = n.r.value_or(1.0);
  if (auto e = t.incoming_edge(id)) {
    g.skip = t.edges[*e].skip;
    if (!g.skip && embeddings) {
      auto it = embeddings->find(id);
      if (it != embeddings->end()) g.zv = it->second;
    }
  }
  return g;
}

}  // namespace

TrainingExample make_training_example(const tree::VesselTree& source, const tree::EmbeddingMap* embeddings,
                                      const TreeAeConfig& cfg, std::uint64_t seed,
                                      std::optional<std::optional<tree::NodeId>> forced_query) {
  if (source.empty()) throw std::invalid_argument("training example: empty tree");
  if (source.dims != cfg.dims) throw std::invalid_argument("training example: tree dims do not match the model");
  const tree::VesselTree t = cfg.augment ? tree::augment_global(source, nn::derive_seed(seed, 1)) : source;
  TrainingExample ex;
  tree::FeaturizeOptions fo;
  fo.mode = tree::FeatureMode::full;
  fo.embeddings = embeddings;
  fo.fourier = cfg.fourier;
  ex.full = tree::featurize_edges(t, cfg.frame, fo);

  if (forced_query) {
    ex.query = *forced_query;
  } else {
    const auto qs = training_queries(t);
    nn::Rng rng(nn::derive_seed(seed, 0));
    ex.query = qs[rng.index(qs.size())];
  }

  tree::VesselTree partial;
  partial.dims = t.dims;
  tree::ChildCountMap declared;
  std::vector<match::TargetNode> targets;
  if (!ex.query) {
    targets.push_back(target_for(t, t.root, cfg.frame, embeddings));
  } else {
    const auto path = t.path_from_root(*ex.query);
    std::vector<tree::Vec3> pos;
    for (auto id : path) pos.push_back(t.node(id).pos);
    if (cfg.jitter > 0) {
      nn::Rng jr(nn::derive_seed(seed, 2));
      for (auto& p : pos)
        for (int c = 0; c < cfg.dims; ++c) p[static_cast<std::size_t>(c)] += jr.normal(0.0, cfg.jitter) / cfg.frame.scale;
    }
    for (std::size_t i = 0; i < path.size(); ++i) {
      partial.insert_node(tree::TreeNode{path[i], pos[i], t.node(path[i]).r});
      declared[path[i]] = t.n_children(path[i]);
      if (i > 0) {
        const auto e = t.incoming_edge(path[i]);
        partial.add_edge(path[i - 1], path[i], std::nullopt, e ? t.edges[*e].skip : false);
      }
    }
    partial.root = path.front();
    for (auto c : t.children(*ex.query)) targets.push_back(target_for(t, c, cfg.frame, embeddings));
  }
  tree::FeaturizeOptions po;
  po.mode = tree::FeatureMode::partial;
  po.query = ex.query;
  po.declared_children = &declared;
  po.fourier = cfg.fourier;
  ex.partial = tree::featurize_edges(partial, cfg.frame, po);
  if (ex.query) ex.partial = tree::filter_non_proximal(std::move(ex.partial), partial, *ex.query);
  ex.partial = tree::strip_partial_extras(ex.partial);
  ex.targets = match::lift_targets(targets, cfg.slot_layout());
  return ex;
}

template <class T>
TreeLoss<T> tree_ae_loss(const TreeAe& model, nn::ParamStore<T>& ps, const std::vector<TrainingExample>& batch,
                         const nn::Tensor<T>& eps) {
  if (batch.empty()) throw std::invalid_argument("tree loss: empty batch");
  std::vector<tree::EdgeFeatures> full, partial;
  std::vector<match::LiftedTargets> targets;
  for (const auto& ex : batch) {
    full.push_back(ex.full);
    partial.push_back(ex.partial);
    targets.push_back(ex.targets);
  }
  const auto fb = pack_edges<T>(full);
  const auto pb = pack_edges<T>(partial);
  const Encoded<T> enc = model.encode(ps, fb);
  TreeLoss<T> out;
  nn::Var<T> z = enc.mu;
  nn::Var<T> kl;
  if (model.config().variational) {
    const auto r = reparameterize_and_kl(enc.mu, enc.logvar, eps);
    z = r.z;
    kl = r.kl;
  }
  const auto slots = model.decode_slots(ps, model.memory(ps, pb, z), pb.mask);
  const auto recon = match::tree_loss(slots, targets, model.config().k);
  out.reconstruction = static_cast<double>(recon.value()[0]);
  out.total = recon;
  if (kl.defined()) {
    out.kl = static_cast<double>(kl.value()[0]);
    out.total = nn::add(recon, nn::scale(kl, static_cast<T>(model.config().kl_weight)));
  }
  return out;
}

std::vector<double> encode_tree(const TreeAe& model, nn::ParamStore<float>& ps, const tree::VesselTree& t,
                                const tree::EmbeddingMap* embeddings) {
  nn::NoGradGuard ng;
  tree::FeaturizeOptions fo;
  fo.mode = tree::FeatureMode::full;
  fo.embeddings = embeddings;
  fo.fourier = model.config().fourier;
  const auto f = tree::featurize_edges(t, model.config().frame, fo);
  const auto enc = model.encode(ps, pack_edges<float>({f}));
  return {enc.mu.value().data.begin(), enc.mu.value().data.end()};
}

void train_tree_ae(const TreeAe& model, const std::vector<tree::VesselTree>& data,
                   const std::vector<tree::EmbeddingMap>* embeddings, const TrainSchedule& schedule,
                   nn::ParamStore<float>& ps, nn::OptState<float>& opt, const TrainHooks& hooks) {
  if (data.empty()) throw std::invalid_argument("train_tree_ae: empty dataset");
  if (embeddings && embeddings->size() != data.size())
    throw std::invalid_argument("train_tree_ae: one embedding map per tree required");
  const TreeAeConfig& cfg = model.config();
  if (ps.entries().empty()) {
    nn::Rng rng(nn::derive_seed(schedule.seed, 0x7ee));
    model.init(ps, rng);
  }
  opt.schedule = schedule.lr;
  opt.hyper = schedule.adamw;
  for (std::uint64_t step = opt.step; step < schedule.steps; ++step) {
    nn::Rng pick(nn::derive_seed(schedule.seed, step, 1));
    std::vector<TrainingExample> batch;
    batch.reserve(schedule.batch * schedule.steps_per_tree);
    const std::uint64_t example_seed = nn::derive_seed(schedule.seed, step, 2);
    for (std::size_t b = 0; b < schedule.batch; ++b) {
      const std::size_t i = pick.index(data.size());
      for (std::size_t s = 0; s < schedule.steps_per_tree; ++s)
        batch.push_back(make_training_example(data[i], embeddings ? &(*embeddings)[i] : nullptr, cfg,
                                              nn::derive_seed(example_seed, b * schedule.steps_per_tree + s)));
    }
    nn::Tensor<float> eps;
    if (cfg.variational) {
      eps = nn::Tensor<float>({batch.size(), cfg.z_dim});
      nn::Rng er(nn::derive_seed(schedule.seed, step, 3));
      for (auto& v : eps.data) v = static_cast<float>(er.normal());
    }
    const double lr = nn::lr_at_step(opt.step, opt.schedule);
    TreeLoss<float> loss;
    try {
      ps.zero_grad();
      loss = tree_ae_loss(model, ps, batch, eps);
      loss.total.backward();
      nn::adamw_step(ps, opt, lr);
    } catch (const nn::NumericalError& e) {
      throw TrainingAborted(std::string("tree training diverged: ") + e.what(), step);
    }
    const std::uint64_t done = step + 1;
    if (hooks.on_log && done % schedule.log_interval == 0) {
      LogRow row{done, lr, static_cast<double>(loss.total.value()[0]), {loss.reconstruction}};
      if (cfg.variational) row.extra.push_back(loss.kl);
      hooks.on_log(row);
    }
    if (hooks.on_checkpoint &&
        ((schedule.checkpoint_interval && done % schedule.checkpoint_interval == 0) || done == schedule.steps))
      hooks.on_checkpoint(done, ps, opt);
  }
}

#define VETTA_INSTANTIATE_TREE_AE(T)                                                                            \
  template EdgeBatch<T> pack_edges(const std::vector<tree::EdgeFeatures>&);                                     \
  template void TreeAe::init(nn::ParamStore<T>&, nn::Rng&) const;                                              \
  template Encoded<T> TreeAe::encode(nn::ParamStore<T>&, const EdgeBatch<T>&) const;                           \
  template nn::Var<T> TreeAe::memory(nn::ParamStore<T>&, const EdgeBatch<T>&, const nn::Var<T>&) const;         \
  template nn::Var<T> TreeAe::decode_slots(nn::ParamStore<T>&, const nn::Var<T>&,                              \
                                           const std::vector<std::uint8_t>&) const;                            \
  template Reparameterized<T> reparameterize_and_kl(const nn::Var<T>&, const nn::Var<T>&, const nn::Tensor<T>&); \
  template TreeLoss<T> tree_ae_loss(const TreeAe&, nn::ParamStore<T>&, const std::vector<TrainingExample>&,     \
                                    const nn::Tensor<T>&);

VETTA_INSTANTIATE_TREE_AE(float)
VETTA_INSTANTIATE_TREE_AE(double)

}  // namespace vetta::model
