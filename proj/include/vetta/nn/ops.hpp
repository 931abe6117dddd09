#pragma once

#include <cstdint>
#include <vector>

#include "vetta/nn/autodiff.hpp"

namespace vetta::nn {

// Row-wise ops treat every axis but the last as a row index. Batched ops
// ([B, N, D] layout) say so explicitly.

/// Exact-erf GELU on a scalar: x * Phi(x).
double gelu_scalar(double x);

/// y = x W + b with W of shape [in, out]; b may be undefined.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> scale(const Var<T>& a, T factor);
template <class T>
Var<T> add_const(const Var<T>& a, const Tensor<T>& c);
template <class T>
Var<T> mul_const(const Var<T>& a, const Tensor<T>& c);
template <class T>
Var<T> square(const Var<T>& a);
template <class T>
Var<T> exp(const Var<T>& a);
template <class T>
Var<T> gelu(const Var<T>& a);
/// Logistic sigmoid applied only to the listed feature columns.
template <class T>
Var<T> sigmoid_columns(const Var<T>& a, const std::vector<std::size_t>& cols);

/// Normalizes each row to zero mean / unit variance, then applies gain and bias.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5));

/// Scaled dot-product attention on already-projected q [B,Nq,D], k/v [B,Nk,D].
/// key_mask has B*Nk entries; keys with mask 0 receive no weight. Sums over
/// keys run in a content-sorted order so the result is bit-identical under
/// any permutation of the key rows.
template <class T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                 const std::vector<std::uint8_t>& key_mask, std::size_t n_heads);

/// Mean over active rows of each batch element: [B,N,D] -> [B,D].
template <class T>
Var<T> masked_mean(const Var<T>& x, const std::vector<std::uint8_t>& mask);

/// Appends z [B,D2] to every row of x [B,N,D1] (or prepends if z_first).
template <class T>
Var<T> concat_broadcast(const Var<T>& x, const Var<T>& z, bool z_first = false);

template <class T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t end);
template <class T>
Var<T> reshape(const Var<T>& x, Shape shape);
/// [N,D] -> [B,N,D] by repetition.
template <class T>
Var<T> tile(const Var<T>& x, std::size_t batch);
/// Replaces row 0 of each batch element of x [B,N,D] with token [1,D].
template <class T>
Var<T> overwrite_first_row(const Var<T>& x, const Var<T>& token);

template <class T>
Var<T> sum(const Var<T>& x);
template <class T>
Var<T> mean(const Var<T>& x);

/// sum_{b,s,t} w[b,s,t] * sum_c m[b,t,c] * (p[b,s,c] - y[b,t,c])^2 with p
/// [B,S,W]; targets y and column mask m are [B,T,W]; weights w are [B,S,T].
template <class T>
Var<T> weighted_sq_dist(const Var<T>& pred, const Tensor<T>& targets, const Tensor<T>& weights,
                        const Tensor<T>& col_mask);

}  // namespace vetta::nn
