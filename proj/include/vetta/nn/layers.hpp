#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vetta/nn/ops.hpp"

namespace vetta::nn {

// Layers are plain descriptions (parameter names and sizes). Values live in a
// ParamStore passed at call time, so models stay copyable and the same layer
// description serves both the 32- and 64-bit stores.

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out) : name_(std::move(name)), in_(in), out_(out) {}

  template <class T>
  void init(ParamStore<T>& ps, Rng& rng) const {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
    ps.add_uniform(name_ + ".w", {in_, out_}, -bound, bound, rng);
    ps.add_uniform(name_ + ".b", {out_}, -bound, bound, rng);
  }

  template <class T>
  Var<T> operator()(ParamStore<T>& ps, const Var<T>& x) const {
    return linear(x, ps.var(name_ + ".w"), ps.var(name_ + ".b"));
  }

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::size_t in_ = 0, out_ = 0;
};

/// Two linear layers with a GELU in between.
class Mlp2 {
 public:
  Mlp2() = default;
  Mlp2(const std::string& name, std::size_t in, std::size_t hidden, std::size_t out)
      : l1_(name + ".l1", in, hidden), l2_(name + ".l2", hidden, out) {}

  template <class T>
  void init(ParamStore<T>& ps, Rng& rng) const {
    l1_.init(ps, rng);
    l2_.init(ps, rng);
  }

  template <class T>
  Var<T> operator()(ParamStore<T>& ps, const Var<T>& x) const {
    return l2_(ps, gelu(l1_(ps, x)));
  }

  std::size_t in() const { return l1_.in(); }
  std::size_t out() const { return l2_.out(); }
  const Linear& first() const { return l1_; }
  const Linear& second() const { return l2_; }

 private:
  Linear l1_, l2_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, std::size_t dim) : name_(std::move(name)), dim_(dim) {}

  template <class T>
  void init(ParamStore<T>& ps, Rng&) const {
    ps.add_constant(name_ + ".gain", {dim_}, T(1));
    ps.add_constant(name_ + ".bias", {dim_}, T(0));
  }

  template <class T>
  Var<T> operator()(ParamStore<T>& ps, const Var<T>& x) const {
    return layer_norm(x, ps.var(name_ + ".gain"), ps.var(name_ + ".bias"));
  }

 private:
  std::string name_;
  std::size_t dim_ = 0;
};

/// Projected multi-head attention over [B,N,D] inputs.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t heads)
      : q_(name + ".q", dim, dim), k_(name + ".k", dim, dim), v_(name + ".v", dim, dim),
        o_(name + ".o", dim, dim), heads_(heads) {
    if (heads == 0 || dim % heads != 0)
      throw std::invalid_argument("attention: model dim " + std::to_string(dim) +
                                  " not divisible by " + std::to_string(heads) + " heads");
  }

  template <class T>
  void init(ParamStore<T>& ps, Rng& rng) const {
    q_.init(ps, rng);
    k_.init(ps, rng);
    v_.init(ps, rng);
    o_.init(ps, rng);
  }

  template <class T>
  Var<T> operator()(ParamStore<T>& ps, const Var<T>& queries, const Var<T>& context,
                    const std::vector<std::uint8_t>& context_mask) const {
    auto a = attention(q_(ps, queries), k_(ps, context), v_(ps, context), context_mask, heads_);
    return o_(ps, a);
  }

  std::size_t heads() const { return heads_; }
  const Linear& q() const { return q_; }
  const Linear& k() const { return k_; }
  const Linear& v() const { return v_; }
  const Linear& o() const { return o_; }

 private:
  Linear q_, k_, v_, o_;
  std::size_t heads_ = 1;
};

/// Stack of pre-norm self-attention blocks with a final LayerNorm.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(const std::string& name, std::size_t dim, std::size_t layers, std::size_t heads,
                     std::size_t ff_mult = 4) {
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string p = name + ".layer" + std::to_string(l);
      blocks_.push_back({LayerNorm(p + ".ln1", dim), MultiHeadAttention(p + ".attn", dim, heads),
                         LayerNorm(p + ".ln2", dim), Mlp2(p + ".ff", dim, ff_mult * dim, dim)});
    }
    final_ = LayerNorm(name + ".ln_out", dim);
  }

  template <class T>
  void init(ParamStore<T>& ps, Rng& rng) const {
    for (const auto& b : blocks_) {
      b.ln1.init(ps, rng);
      b.attn.init(ps, rng);
      b.ln2.init(ps, rng);
      b.ff.init(ps, rng);
    }
    final_.init(ps, rng);
  }

  /// x: [B,N,D]; mask: B*N entries marking active rows (the only valid keys).
  template <class T>
  Var<T> operator()(ParamStore<T>& ps, Var<T> x, const std::vector<std::uint8_t>& mask) const {
    for (const auto& b : blocks_) {
      auto h = b.ln1(ps, x);
      x = add(x, b.attn(ps, h, h, mask));
      x = add(x, b.ff(ps, b.ln2(ps, x)));
    }
    return final_(ps, x);
  }

 private:
  struct Block {
    LayerNorm ln1;
    MultiHeadAttention attn;
    LayerNorm ln2;
    Mlp2 ff;
  };
  std::vector<Block> blocks_;
  LayerNorm final_;
};

/// Pre-norm decoder: self-attention over the query rows, cross-attention
/// into a masked memory, feed-forward; final LayerNorm.
class TransformerDecoder {
 public:
  TransformerDecoder() = default;
  TransformerDecoder(const std::string& name, std::size_t dim, std::size_t layers, std::size_t heads,
                     std::size_t ff_mult = 4) {
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string p = name + ".layer" + std::to_string(l);
      blocks_.push_back({LayerNorm(p + ".ln1", dim), MultiHeadAttention(p + ".self", dim, heads),
                         LayerNorm(p + ".ln2", dim), MultiHeadAttention(p + ".cross", dim, heads),
                         LayerNorm(p + ".ln3", dim), Mlp2(p + ".ff", dim, ff_mult * dim, dim)});
    }
    final_ = LayerNorm(name + ".ln_out", dim);
  }

  template <class T>
  void init(ParamStore<T>& ps, Rng& rng) const {
    for (const auto& b : blocks_) {
      b.ln1.init(ps, rng);
      b.self_attn.init(ps, rng);
      b.ln2.init(ps, rng);
      b.cross_attn.init(ps, rng);
      b.ln3.init(ps, rng);
      b.ff.init(ps, rng);
    }
    final_.init(ps, rng);
  }

  template <class T>
  Var<T> operator()(ParamStore<T>& ps, Var<T> x, const Var<T>& memory,
                    const std::vector<std::uint8_t>& memory_mask) const {
    if (memory.value().rank() != 3 || memory.value().dim(1) == 0)
      throw std::invalid_argument("decoder: empty memory");
    const std::vector<std::uint8_t> all(x.value().dim(0) * x.value().dim(1), 1);
    for (const auto& b : blocks_) {
      auto h = b.ln1(ps, x);
      x = add(x, b.self_attn(ps, h, h, all));
      x = add(x, b.cross_attn(ps, b.ln2(ps, x), memory, memory_mask));
      x = add(x, b.ff(ps, b.ln3(ps, x)));
    }
    return final_(ps, x);
  }

 private:
  struct Block {
    LayerNorm ln1;
    MultiHeadAttention self_attn;
    LayerNorm ln2;
    MultiHeadAttention cross_attn;
    LayerNorm ln3;
    Mlp2 ff;
  };
  std::vector<Block> blocks_;
  LayerNorm final_;
};

}  // namespace vetta::nn
