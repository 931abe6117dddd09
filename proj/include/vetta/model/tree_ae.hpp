#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "vetta/match/matching.hpp"
#include "vetta/model/vessel_ae.hpp"
#include "vetta/nn/layers.hpp"
#include "vetta/tree/augment.hpp"
#include "vetta/tree/features.hpp"

namespace vetta::model {

struct TreeAeConfig {
  int dims = 2;
  std::size_t heads = 1;
  std::size_t head_dim = 64;  // model dim = heads * head_dim
  std::size_t encoder_layers = 2;
  std::size_t partial_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t edge_hidden = 128;
  std::size_t pool_hidden = 128;
  std::size_t predictor_hidden = 128;
  std::size_t z_dim = 256;
  std::size_t slots = 32;
  std::size_t k = 3;
  bool variational = false;
  double kl_weight = 1e-6;
  double jitter = 0.005;  // model-frame units, partial-tree nodes only
  bool augment = false;
  std::size_t max_nodes = 64;
  geom::FourierConfig fourier;
  tree::ModelFrame frame = tree::ModelFrame::unit_square();

  void validate() const;
  std::size_t model_dim() const { return heads * head_dim; }
  tree::FeatureLayout full_layout() const;
  tree::FeatureLayout partial_layout() const;  // stripped
  match::SlotLayout slot_layout() const { return {dims, fourier}; }
};

nlohmann::json to_json(const TreeAeConfig& c);
TreeAeConfig tree_config_from_json(const nlohmann::json& j);

/// Dense batch of padded edge-feature sets.
template <class T>
struct EdgeBatch {
  nn::Tensor<T> data;  // [B, N, W]
  std::vector<std::uint8_t> mask;  // B * N
};

template <class T>
EdgeBatch<T> pack_edges(const std::vector<tree::EdgeFeatures>& sets);

template <class T>
struct Encoded {
  nn::Var<T> mu;
  nn::Var<T> logvar;  // defined only for variational models
};

class TreeAe {
 public:
  explicit TreeAe(TreeAeConfig cfg);

  template <class T>
  void init(nn::ParamStore<T>& ps, nn::Rng& rng) const;

  /// Full-tree branch: [B, N, W_full] -> z_t (or mu and log-variance) [B, z_dim].
  template <class T>
  Encoded<T> encode(nn::ParamStore<T>& ps, const EdgeBatch<T>& full) const;

  /// Partial-tree branch; row 0 of every element is replaced by the learned
  /// start token. Output rows carry z_t after a projection back to model dim.
  template <class T>
  nn::Var<T> memory(nn::ParamStore<T>& ps, const EdgeBatch<T>& partial, const nn::Var<T>& z) const;

  /// Slot predictions [B, slots, slot width]; the skip column (3D) is a probability.
  template <class T>
  nn::Var<T> decode_slots(nn::ParamStore<T>& ps, const nn::Var<T>& memory,
                          const std::vector<std::uint8_t>& memory_mask) const;

  const TreeAeConfig& config() const { return cfg_; }

 private:
  TreeAeConfig cfg_;
  nn::Mlp2 full_edge_, partial_edge_, pool_, predictor_;
  nn::TransformerEncoder full_encoder_, partial_encoder_;
  nn::TransformerDecoder decoder_;
  nn::Linear join_;
};

/// z = mu + exp(logvar / 2) * eps and the KL divergence to N(0, I), summed
/// over latent dimensions and averaged over the batch (unscaled).
template <class T>
struct Reparameterized {
  nn::Var<T> z;
  nn::Var<T> kl;
};

template <class T>
Reparameterized<T> reparameterize_and_kl(const nn::Var<T>& mu, const nn::Var<T>& logvar, const nn::Tensor<T>& eps);

/// One decoding step prepared from a ground-truth tree.
struct TrainingExample {
  tree::EdgeFeatures full;
  tree::EdgeFeatures partial;
  match::LiftedTargets targets;
  std::optional<tree::NodeId> query;  // empty for the root step
};

/// The root step or an internal node is chosen uniformly as the query. The
/// partial tree is the ground-truth path from the root to the query, with
/// declared child counts from the full tree and jittered node positions.
TrainingExample make_training_example(const tree::VesselTree& tree, const tree::EmbeddingMap* embeddings,
                                      const TreeAeConfig& cfg, std::uint64_t seed,
                                      std::optional<std::optional<tree::NodeId>> forced_query = std::nullopt);

/// Queries a training step can pick: nullopt for the root step, then every
/// node with at least one child in BFS order.
std::vector<std::optional<tree::NodeId>> training_queries(const tree::VesselTree& tree);

template <class T>
struct TreeLoss {
  nn::Var<T> total;
  double reconstruction = 0;
  double kl = 0;
};

/// Set loss over the batch plus kl_weight * KL for variational models. `eps`
/// ([B, z_dim]) is used only by variational models.
template <class T>
TreeLoss<T> tree_ae_loss(const TreeAe& model, nn::ParamStore<T>& ps, const std::vector<TrainingExample>& batch,
                         const nn::Tensor<T>& eps);

/// Encodes a whole tree (z_t, or z_mu for variational models) without gradients.
std::vector<double> encode_tree(const TreeAe& model, nn::ParamStore<float>& ps, const tree::VesselTree& tree,
                                const tree::EmbeddingMap* embeddings = nullptr);

void train_tree_ae(const TreeAe& model, const std::vector<tree::VesselTree>& data,
                   const std::vector<tree::EmbeddingMap>* embeddings, const TrainSchedule& schedule,
                   nn::ParamStore<float>& ps, nn::OptState<float>& opt, const TrainHooks& hooks = {});

}  // namespace vetta::model
