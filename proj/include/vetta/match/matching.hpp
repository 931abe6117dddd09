#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vetta/geom/fourier.hpp"
#include "vetta/match/assignment.hpp"
#include "vetta/nn/autodiff.hpp"
#include "vetta/tree/features.hpp"

namespace vetta::match {

class MatchingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kTargetCapacity = 2;
inline constexpr std::size_t kDefaultSlots = 32;

/// Column layout shared by slot predictions and lifted targets:
/// lifted position, topology (3), then in 3D log radius, z_v and skip.
struct SlotLayout {
  int dims = 2;
  geom::FourierConfig fourier;

  std::size_t pos() const { return 0; }
  std::size_t pos_width() const { return static_cast<std::size_t>(dims) * fourier.width_per_axis(); }
  std::size_t topo() const { return pos_width(); }
  std::size_t log_r() const { return topo() + 3; }
  std::size_t zv() const { return log_r() + 1; }
  std::size_t skip() const { return zv() + tree::kVesselEmbeddingDim; }
  std::size_t width() const { return dims == 3 ? skip() + 1 : topo() + 3; }
};

struct TargetNode {
  tree::Vec3 pos{0, 0, 0};  // model frame
  int n_children = 0;
  double r = 1.0;
  std::vector<double> zv;  // empty: z_v is not supervised (like skip targets)
  bool skip = false;
};

/// Targets padded to a fixed capacity. Column mask zeroes z_v for skip targets
/// and targets without an embedding, and everything for padding rows.
struct LiftedTargets {
  SlotLayout layout;
  std::size_t capacity = kTargetCapacity;
  std::vector<double> rows;      // capacity x width
  std::vector<double> col_mask;  // capacity x width
  std::vector<std::uint8_t> mask;

  std::size_t width() const { return layout.width(); }
  std::size_t active() const;
};

LiftedTargets lift_targets(const std::vector<TargetNode>& targets, const SlotLayout& layout,
                           std::size_t capacity = kTargetCapacity);

struct CostMatrix {
  std::size_t s = 0;
  std::size_t t = 0;
  std::vector<double> data;  // s x t
  std::vector<std::uint8_t> mask;

  double at(std::size_t i, std::size_t j) const { return data[i * t + j]; }
};

/// Distances between slot rows (s x width) and lifted target rows, restricted
/// to the target column mask. Squared for matching and loss.
CostMatrix cost_matrix(const std::vector<double>& slots, std::size_t n_slots, const LiftedTargets& targets,
                       bool squared = true);

struct MatchingResult {
  std::size_t s = 0;
  std::size_t t = 0;
  std::vector<double> L;
  std::vector<double> R;
};

/// One optimal slot per active target; inactive columns stay zero.
std::vector<double> right_hand_matching(const std::vector<double>& cost, std::size_t s, std::size_t t,
                                        const std::vector<std::uint8_t>& mask);

MatchingResult top_k_matching(const CostMatrix& c, std::size_t k);

/// sum(C*L)/sum(L) + sum(C*R)/sum(R).
double tree_loss_value(const CostMatrix& c, std::size_t k);

/// Batched differentiable loss, averaged over the batch. `slots` is [B, S, W];
/// matching runs on the forward values and is held constant.
template <class T>
nn::Var<T> tree_loss(const nn::Var<T>& slots, const std::vector<LiftedTargets>& targets, std::size_t k);

struct Clustering {
  std::vector<std::vector<std::size_t>> members;  // ordered by smallest member
  std::vector<std::vector<double>> means;
};

/// Average-linkage agglomerative clustering on Euclidean slot distances, cut
/// at k clusters. Ties merge the pair with the smallest indices first.
Clustering cluster_slots(const std::vector<double>& slots, std::size_t n_slots, std::size_t width, std::size_t k);

}  // namespace vetta::match
