#include "vetta/match/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vetta/nn/ops.hpp"

namespace vetta::match {

std::size_t LiftedTargets::active() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

LiftedTargets lift_targets(const std::vector<TargetNode>& targets, const SlotLayout& layout, std::size_t capacity) {
  if (targets.size() > capacity)
    throw MatchingError("lift_targets: " + std::to_string(targets.size()) + " targets exceed capacity " +
                        std::to_string(capacity));
  LiftedTargets out;
  out.layout = layout;
  out.capacity = capacity;
  const std::size_t w = layout.width();
  out.rows.assign(capacity * w, 0.0);
  out.col_mask.assign(capacity * w, 0.0);
  out.mask.assign(capacity, 0);
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const TargetNode& g = targets[j];
    if (g.n_children < 0 || g.n_children > 2) throw MatchingError("lift_targets: child count out of range");
    double* row = out.rows.data() + j * w;
    double* m = out.col_mask.data() + j * w;
    geom::lift_fourier_into(std::span<const double>(g.pos.data(), static_cast<std::size_t>(layout.dims)),
                            layout.fourier, std::span<double>(row + layout.pos(), layout.pos_width()));
    row[layout.topo() + static_cast<std::size_t>(tree::topology_index(g.n_children))] = 1.0;
    std::fill(m, m + w, 1.0);
    if (layout.dims == 3) {
      row[layout.log_r()] = tree::log_radius(g.r);
      if (!g.zv.empty()) {
        if (g.zv.size() != tree::kVesselEmbeddingDim) throw MatchingError("lift_targets: z_v must have 64 entries");
        std::copy(g.zv.begin(), g.zv.end(), row + layout.zv());
      }
      row[layout.skip()] = g.skip ? 1.0 : 0.0;
      if (g.skip || g.zv.empty()) {
        std::fill(row + layout.zv(), row + layout.skip(), 0.0);
        std::fill(m + layout.zv(), m + layout.skip(), 0.0);
      }
    }
    out.mask[j] = 1;
  }
  return out;
}

CostMatrix cost_matrix(const std::vector<double>& slots, std::size_t n_slots, const LiftedTargets& targets,
                       bool squared) {
  const std::size_t w = targets.width();
  if (slots.size() != n_slots * w)
    throw MatchingError("cost_matrix: slot buffer holds " + std::to_string(slots.size()) + " values, expected " +
                        std::to_string(n_slots * w));
  CostMatrix c;
  c.s = n_slots;
  c.t = targets.capacity;
  c.mask = targets.mask;
  c.data.assign(c.s * c.t, 0.0);
  for (std::size_t i = 0; i < c.s; ++i)
    for (std::size_t j = 0; j < c.t; ++j) {
      const double* p = slots.data() + i * w;
      const double* y = targets.rows.data() + j * w;
      const double* m = targets.col_mask.data() + j * w;
      double acc = 0;
      for (std::size_t q = 0; q < w; ++q) acc += m[q] * (p[q] - y[q]) * (p[q] - y[q]);
      c.data[i * c.t + j] = squared ? acc : std::sqrt(acc);
    }
  return c;
}

std::vector<double> right_hand_matching(const std::vector<double>& cost, std::size_t s, std::size_t t,
                                        const std::vector<std::uint8_t>& mask) {
  if (cost.size() != s * t || mask.size() != t) throw MatchingError("right_hand_matching: shape mismatch");
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < t; ++j)
    if (mask[j]) active.push_back(j);
  if (active.empty()) throw MatchingError("right_hand_matching: no active targets");
  if (s < active.size()) throw MatchingError("right_hand_matching: fewer slots than active targets");
  std::vector<double> sub(s * active.size());
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t a = 0; a < active.size(); ++a) sub[i * active.size() + a] = cost[i * t + active[a]];
  const Assignment as = linear_sum_assignment(sub, s, active.size());
  std::vector<double> r(s * t, 0.0);
  for (std::size_t q = 0; q < as.rows.size(); ++q) r[as.rows[q] * t + active[as.cols[q]]] = 1.0;
  return r;
}

MatchingResult top_k_matching(const CostMatrix& c, std::size_t k) {
  const std::size_t s = c.s, t = c.t;
  if (c.data.size() != s * t || c.mask.size() != t) throw MatchingError("top_k_matching: shape mismatch");
  std::size_t n = 0;
  for (auto m : c.mask) n += m ? 1 : 0;
  if (k == 0) throw MatchingError("top_k_matching: k must be positive");
  if (n == 0) throw MatchingError("top_k_matching: no active targets");
  if (s < k * n)
    throw MatchingError("top_k_matching: " + std::to_string(s) + " slots cannot cover k=" + std::to_string(k) +
                        " x " + std::to_string(n) + " targets");
  std::vector<double> cp = c.data;
  const double max_value = *std::max_element(c.data.begin(), c.data.end()) + 1.0;
  MatchingResult out{s, t, std::vector<double>(s * t, 0.0), std::vector<double>(s * t, 0.0)};
  for (std::size_t round = 0; round < k; ++round) {
    const std::vector<double> ri = right_hand_matching(cp, s, t, c.mask);
    for (std::size_t q = 0; q < s * t; ++q) {
      out.L[q] += ri[q];
      out.R[q] += ri[q];
    }
    for (std::size_t i = 0; i < s; ++i) {
      bool matched = false;
      for (std::size_t j = 0; j < t; ++j) matched = matched || ri[i * t + j] > 0.5;
      if (matched) std::fill(cp.begin() + static_cast<std::ptrdiff_t>(i * t),
                             cp.begin() + static_cast<std::ptrdiff_t>((i + 1) * t), max_value);
    }
  }
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < t; ++j) cp[i * t + j] += max_value * (1.0 - (c.mask[j] ? 1.0 : 0.0));
  for (std::size_t i = 0; i < s; ++i) {
    double row_sum = 0;
    for (std::size_t j = 0; j < t; ++j) row_sum += out.L[i * t + j];
    if (row_sum >= 0.5) continue;
    std::size_t best = 0;
    for (std::size_t j = 1; j < t; ++j)
      if (cp[i * t + j] < cp[i * t + best]) best = j;
    out.L[i * t + best] = 1.0;
  }
  return out;
}

double tree_loss_value(const CostMatrix& c, std::size_t k) {
  const MatchingResult m = top_k_matching(c, k);
  double cl = 0, sl = 0, cr = 0, sr = 0;
  for (std::size_t q = 0; q < c.data.size(); ++q) {
    cl += c.data[q] * m.L[q];
    sl += m.L[q];
    cr += c.data[q] * m.R[q];
    sr += m.R[q];
  }
  return cl / sl + cr / sr;
}

template <class T>
nn::Var<T> tree_loss(const nn::Var<T>& slots, const std::vector<LiftedTargets>& targets, std::size_t k) {
  const auto& shape = slots.shape();
  if (shape.size() != 3) throw MatchingError("tree_loss: slots must be [B, S, W]");
  const std::size_t b = shape[0], s = shape[1], w = shape[2];
  if (targets.size() != b) throw MatchingError("tree_loss: one target set per batch element required");
  if (b == 0) throw MatchingError("tree_loss: empty batch");
  const std::size_t t = targets.front().capacity;
  nn::Tensor<T> y({b, t, w}), mask({b, t, w}), weights({b, s, t});
  std::vector<double> vals(s * w);
  for (std::size_t e = 0; e < b; ++e) {
    const LiftedTargets& g = targets[e];
    if (g.capacity != t || g.width() != w) throw MatchingError("tree_loss: inconsistent target layout");
    for (std::size_t q = 0; q < s * w; ++q) vals[q] = static_cast<double>(slots.value()[e * s * w + q]);
    const CostMatrix c = cost_matrix(vals, s, g, true);
    const MatchingResult m = top_k_matching(c, k);
    double sl = 0, sr = 0;
    for (std::size_t q = 0; q < s * t; ++q) {
      sl += m.L[q];
      sr += m.R[q];
    }
    for (std::size_t q = 0; q < s * t; ++q)
      weights[e * s * t + q] = static_cast<T>((m.L[q] / sl + m.R[q] / sr) / static_cast<double>(b));
    for (std::size_t q = 0; q < t * w; ++q) {
      y[e * t * w + q] = static_cast<T>(g.rows[q]);
      mask[e * t * w + q] = static_cast<T>(g.col_mask[q]);
    }
  }
  return nn::weighted_sq_dist(slots, y, weights, mask);
}

template nn::Var<float> tree_loss(const nn::Var<float>&, const std::vector<LiftedTargets>&, std::size_t);
template nn::Var<double> tree_loss(const nn::Var<double>&, const std::vector<LiftedTargets>&, std::size_t);

Clustering cluster_slots(const std::vector<double>& slots, std::size_t n_slots, std::size_t width, std::size_t k) {
  if (slots.size() != n_slots * width) throw MatchingError("cluster_slots: slot buffer size mismatch");
  if (k == 0) throw MatchingError("cluster_slots: k must be positive");
  if (k > n_slots)
    throw MatchingError("cluster_slots: k=" + std::to_string(k) + " exceeds " + std::to_string(n_slots) + " slots");
  std::vector<std::vector<std::size_t>> members(n_slots);
  for (std::size_t i = 0; i < n_slots; ++i) members[i] = {i};
  std::vector<std::vector<double>> d(n_slots, std::vector<double>(n_slots, 0.0));
  for (std::size_t i = 0; i < n_slots; ++i)
    for (std::size_t j = i + 1; j < n_slots; ++j) {
      double acc = 0;
      for (std::size_t q = 0; q < width; ++q) {
        const double diff = slots[i * width + q] - slots[j * width + q];
        acc += diff * diff;
      }
      d[i][j] = d[j][i] = std::sqrt(acc);
    }
  while (members.size() > k) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < members.size(); ++i)
      for (std::size_t j = i + 1; j < members.size(); ++j)
        if (d[i][j] < best) {
          best = d[i][j];
          bi = i;
          bj = j;
        }
    const double ni = static_cast<double>(members[bi].size()), nj = static_cast<double>(members[bj].size());
    for (std::size_t c = 0; c < members.size(); ++c) {
      if (c == bi || c == bj) continue;
      d[bi][c] = d[c][bi] = (ni * d[bi][c] + nj * d[bj][c]) / (ni + nj);
    }
    members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
    std::sort(members[bi].begin(), members[bi].end());
    members.erase(members.begin() + static_cast<std::ptrdiff_t>(bj));
    d.erase(d.begin() + static_cast<std::ptrdiff_t>(bj));
    for (auto& row : d) row.erase(row.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  Clustering out;
  out.members = members;
  for (const auto& mem : members) {
    std::vector<double> mean(width, 0.0);
    for (std::size_t i : mem)
      for (std::size_t q = 0; q < width; ++q) mean[q] += slots[i * width + q];
    for (double& v : mean) v /= static_cast<double>(mem.size());
    out.means.push_back(std::move(mean));
  }
  return out;
}

}  // namespace vetta::match
