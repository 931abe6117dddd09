#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vetta/model/tree_ae.hpp"
#include "vetta/model/vessel_ae.hpp"

namespace vetta::model {

enum class ExpansionOrder { fifo, lifo };

struct DecodeLimits {
  std::size_t max_nodes = 64;
  std::size_t edge_samples = 100;
  ExpansionOrder order = ExpansionOrder::fifo;
};

/// Optional first-stage model used to turn z_v into edge centerlines.
struct VesselDecoder {
  const VesselAe* model = nullptr;
  nn::ParamStore<float>* params = nullptr;
};

struct ChildPrediction {
  tree::Vec3 pos{0, 0, 0};  // data frame
  int n_children = 0;
  std::optional<double> r;
  std::vector<double> zv;  // empty for the root and skip edges
  bool skip = false;
};

struct DecodeResult {
  tree::VesselTree tree;
  bool truncated = false;
  std::size_t steps = 0;
  std::vector<std::string> warnings;
};

/// Runs the decoder branch on the current partial tree and turns the slot
/// predictions into `k` nodes: clusters in the lifted domain, per-axis
/// position inversion, topology by argmax of the mean one-hots and, in 3D,
/// radius, z_v and skip flag. Children come out sorted by x then y.
/// With no query the partial tree must be empty (root step).
std::vector<ChildPrediction> expand_query(const TreeAe& model, nn::ParamStore<float>& ps,
                                          const tree::VesselTree& partial, const tree::ChildCountMap& declared,
                                          std::optional<tree::NodeId> query, const std::vector<double>& z_t,
                                          std::size_t k);

/// Slot predictions [slots x width] to k child nodes.
std::vector<ChildPrediction> slots_to_children(const TreeAeConfig& cfg, const std::vector<double>& slots,
                                               std::size_t k);

/// Centerline between two decoded nodes. Skip edges and edges without a
/// vessel model are straight; others go through the vessel decoder in eval
/// mode and are mapped back from the normalized frame.
geom::PolylineVessel reconstruct_edge_geometry(const geom::Point4& a, const geom::Point4& b,
                                               const std::vector<double>& z_v, bool skip,
                                               const VesselDecoder* vessel, std::size_t samples = 100,
                                               std::vector<std::string>* warnings = nullptr);

/// Decodes a full tree from z_t. The result always satisfies the tree
/// invariants; hitting max_nodes sets `truncated`.
DecodeResult decode_tree(const TreeAe& model, nn::ParamStore<float>& ps, const std::vector<double>& z_t,
                         const VesselDecoder* vessel = nullptr, const DecodeLimits& limits = {});

/// Encode then decode.
DecodeResult reconstruct_tree(const TreeAe& model, nn::ParamStore<float>& ps, const tree::VesselTree& input,
                              const tree::EmbeddingMap* embeddings = nullptr, const VesselDecoder* vessel = nullptr,
                              const DecodeLimits& limits = {});

}  // namespace vetta::model
