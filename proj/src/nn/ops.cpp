#include "vetta/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vetta::nn {

namespace {

template <class T>
void check_finite(const Tensor<T>& t, const char* op) {
  T acc = T(0);
  for (const T v : t.data) acc += v * T(0);
  if (!std::isfinite(acc)) throw NumericalError(std::string("non-finite output in ") + op);
}

template <class T>
Var<T> make_result(Tensor<T> value, std::initializer_list<const Var<T>*> inputs, const char* op,
                   std::function<void(Node<T>&)> backward) {
  check_finite(value, op);
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (GradMode::enabled()) {
    for (const Var<T>* in : inputs) needs = needs || (in->defined() && in->requires_grad());
  }
  if (needs) {
    node->requires_grad = true;
    for (const Var<T>* in : inputs) {
      if (in->defined()) node->inputs.push_back(in->node());
    }
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

template <class T>
std::vector<T>* grad_of(Node<T>& node, std::size_t i) {
  Node<T>& in = *node.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// C[M,N] (+)= A[M,K] * B[K,N]. Each output element is accumulated over k in
// index order by the same instruction sequence regardless of its row, so row
// results never depend on which other rows are present.
template <class T>
void gemm_nn(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  // Rows are processed in blocks of four sharing each load of B; every output
  // row still accumulates over p in ascending order, so a row's result does
  // not depend on which other rows are in the matrix.
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    if (!accumulate) std::fill(c0, c0 + 4 * n, T(0));
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = brow[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    T* __restrict crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    const T* __restrict arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <class T>
void gemm_tn_acc(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m,
                 std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const T* a0 = a + i * k;
    const T* __restrict b0 = b + i * n;
    const T* __restrict b1 = b0 + n;
    const T* __restrict b2 = b1 + n;
    const T* __restrict b3 = b2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      T* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
    }
  }
  for (; i < m; ++i) {
    const T* __restrict arow = a + i * k;
    const T* __restrict brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
std::vector<T> transpose(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
  return out;
}

template <class T>
bool row_less(const T* a, const T* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] < b[i]) return true;
    if (b[i] < a[i]) return false;
  }
  return false;
}

}  // namespace

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const std::size_t in = w.value().dim(0), out = w.value().dim(1);
  require(w.value().rank() == 2, "linear: weight must be rank 2");
  require(x.value().cols() == in, "linear: input width " + std::to_string(x.value().cols()) +
                                      " != weight rows " + std::to_string(in));
  if (b.defined()) require(b.size() == out, "linear: bias length mismatch");
  const std::size_t rows = x.value().rows();
  Shape shape = x.shape();
  shape.back() = out;
  Tensor<T> y(shape);
  gemm_nn(x.value().data.data(), w.value().data.data(), y.data.data(), rows, in, out, false);
  if (b.defined()) {
    const T* bias = b.value().data.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T* yr = y.data.data() + r * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += bias[j];
    }
  }
  const bool has_bias = b.defined();
  return make_result<T>(std::move(y), {&x, &w, &b}, "linear",
                        [rows, in, out, has_bias](Node<T>& self) {
    const T* dy = self.grad.data();
    const Tensor<T>& xv = self.inputs[0]->value;
    const Tensor<T>& wv = self.inputs[1]->value;
    if (auto* dx = grad_of(self, 0)) {
      const auto wt = transpose(wv.data.data(), in, out);
      gemm_nn(dy, wt.data(), dx->data(), rows, out, in, true);
    }
    if (auto* dw = grad_of(self, 1)) gemm_tn_acc(xv.data.data(), dy, dw->data(), rows, in, out);
    if (has_bias) {
      if (auto* db = grad_of(self, 2)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < out; ++j) (*db)[j] += dy[r * out + j];
      }
    }
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return make_result<T>(std::move(y), {&a, &b}, "add", [](Node<T>& self) {
    for (std::size_t s = 0; s < 2; ++s)
      if (auto* g = grad_of(self, s))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return make_result<T>(std::move(y), {&a, &b}, "sub", [](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return make_result<T>(std::move(y), {&a, &b}, "mul", [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> y = a.value();
  for (auto& v : y.data) v *= factor;
  return make_result<T>(std::move(y), {&a}, "scale", [factor](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor;
  });
}

template <class T>
Var<T> add_const(const Var<T>& a, const Tensor<T>& c) {
  require(a.size() == c.size(), "add_const: size mismatch");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += c[i];
  return make_result<T>(std::move(y), {&a}, "add_const", [](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

template <class T>
Var<T> mul_const(const Var<T>& a, const Tensor<T>& c) {
  require(a.size() == c.size(), "mul_const: size mismatch");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c[i];
  return make_result<T>(std::move(y), {&a}, "mul_const", [c](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * c[i];
  });
}

template <class T>
Var<T> square(const Var<T>& a) {
  Tensor<T> y = a.value();
  for (auto& v : y.data) v *= v;
  return make_result<T>(std::move(y), {&a}, "square", [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += T(2) * av[i] * self.grad[i];
  });
}

template <class T>
Var<T> exp(const Var<T>& a) {
  Tensor<T> y = a.value();
  for (auto& v : y.data) v = std::exp(v);
  return make_result<T>(std::move(y), {&a}, "exp", [](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.value[i] * self.grad[i];
  });
}

template <class T>
Var<T> gelu(const Var<T>& a) {
  check_finite(a.value(), "gelu input");
  Tensor<T> y = a.value();
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (auto& v : y.data) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  return make_result<T>(std::move(y), {&a}, "gelu", [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    const T inv_sqrt_2pi = T(0.5) * std::numbers::inv_sqrtpi_v<T> * std::numbers::sqrt2_v<T>;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T x = av[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
        (*g)[i] += self.grad[i] * (cdf + x * pdf);
      }
    }
  });
}

template <class T>
Var<T> sigmoid_columns(const Var<T>& a, const std::vector<std::size_t>& cols) {
  const std::size_t width = a.value().cols();
  for (auto c : cols) require(c < width, "sigmoid_columns: column out of range");
  Tensor<T> y = a.value();
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (auto c : cols) {
      T& v = y[r * width + c];
      v = T(1) / (T(1) + std::exp(-v));
    }
  return make_result<T>(std::move(y), {&a}, "sigmoid_columns", [cols, width](Node<T>& self) {
    if (auto* g = grad_of(self, 0)) {
      std::vector<std::uint8_t> is_sig(width, 0);
      for (auto c : cols) is_sig[c] = 1;
      for (std::size_t i = 0; i < g->size(); ++i) {
        const T s = self.value[i];
        (*g)[i] += is_sig[i % width] ? self.grad[i] * s * (T(1) - s) : self.grad[i];
      }
    }
  });
}

template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  const std::size_t d = x.value().cols();
  require(d > 0, "layer_norm: zero-length feature axis");
  require(gain.size() == d && bias.size() == d, "layer_norm: gain/bias length mismatch");
  const std::size_t rows = x.value().rows();
  Tensor<T> y(x.shape());
  std::vector<T> xhat(x.size()), inv_std(rows);
  const T* g = gain.value().data.data();
  const T* bb = bias.value().data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.value().data.data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mean) * inv;
      xhat[r * d + j] = h;
      y[r * d + j] = h * g[j] + bb[j];
    }
  }
  return make_result<T>(
      std::move(y), {&x, &gain, &bias}, "layer_norm",
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        const T* dy = self.grad.data();
        const T* g = self.inputs[1]->value.data.data();
        if (auto* dx = grad_of(self, 0)) {
          std::vector<T> dh(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T s1 = 0, s2 = 0;
            for (std::size_t j = 0; j < d; ++j) {
              dh[j] = dy[r * d + j] * g[j];
              s1 += dh[j];
              s2 += dh[j] * xhat[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j)
              (*dx)[r * d + j] +=
                  inv_std[r] / T(d) * (T(d) * dh[j] - s1 - xhat[r * d + j] * s2);
          }
        }
        if (auto* dg = grad_of(self, 1))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) (*dg)[j] += dy[r * d + j] * xhat[r * d + j];
        if (auto* db = grad_of(self, 2))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) (*db)[j] += dy[r * d + j];
      });
}

template <class T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                 const std::vector<std::uint8_t>& key_mask, std::size_t n_heads) {
  require(q.value().rank() == 3 && k.value().rank() == 3 && v.value().rank() == 3,
          "attention: expected [B,N,D] inputs");
  const std::size_t batch = q.value().dim(0), nq = q.value().dim(1), d = q.value().dim(2);
  const std::size_t nk = k.value().dim(1);
  require(k.value().dim(0) == batch && v.value().dim(0) == batch, "attention: batch mismatch");
  require(k.value().dim(2) == d && v.value().dim(2) == d && v.value().dim(1) == nk,
          "attention: key/value shape mismatch");
  require(n_heads > 0 && d % n_heads == 0, "attention: model dim not divisible by heads");
  require(key_mask.size() == batch * nk, "attention: key mask length mismatch");
  const std::size_t dh = d / n_heads;
  const T scl = T(1) / std::sqrt(T(dh));

  // Active keys per batch element in canonical (content-sorted) order.
  std::vector<std::vector<std::size_t>> keys(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    auto& idx = keys[b];
    for (std::size_t j = 0; j < nk; ++j)
      if (key_mask[b * nk + j]) idx.push_back(j);
    if (idx.empty()) throw std::invalid_argument("attention: every key is masked");
    const T* kb = k.value().data.data() + b * nk * d;
    const T* vb = v.value().data.data() + b * nk * d;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
      if (row_less(kb + x * d, kb + y * d, d)) return true;
      if (row_less(kb + y * d, kb + x * d, d)) return false;
      return row_less(vb + x * d, vb + y * d, d);
    });
  }

  // probs[b][h][i][a] over the ordered active keys of element b.
  std::vector<std::size_t> offset(batch + 1, 0);
  for (std::size_t b = 0; b < batch; ++b) offset[b + 1] = offset[b] + n_heads * nq * keys[b].size();
  std::vector<T> probs(offset[batch]);
  Tensor<T> out(q.shape());
  std::vector<T> scores;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& idx = keys[b];
    const std::size_t na = idx.size();
    scores.resize(na);
    const T* qb = q.value().data.data() + b * nq * d;
    const T* kb = k.value().data.data() + b * nk * d;
    const T* vb = v.value().data.data() + b * nk * d;
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t i = 0; i < nq; ++i) {
        const T* qi = qb + i * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t a = 0; a < na; ++a) {
          const T* kj = kb + idx[a] * d + h * dh;
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          scores[a] = s * scl;
          mx = std::max(mx, scores[a]);
        }
        T z = 0;
        for (std::size_t a = 0; a < na; ++a) {
          scores[a] = std::exp(scores[a] - mx);
          z += scores[a];
        }
        T* p = probs.data() + offset[b] + (h * nq + i) * na;
        T* o = out.data.data() + b * nq * d + i * d + h * dh;
        for (std::size_t a = 0; a < na; ++a) {
          p[a] = scores[a] / z;
          const T* vj = vb + idx[a] * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) o[c] += p[a] * vj[c];
        }
      }
    }
  }

  return make_result<T>(
      std::move(out), {&q, &k, &v}, "attention",
      [batch, nq, nk, d, dh, n_heads, scl, keys = std::move(keys), offset = std::move(offset),
       probs = std::move(probs)](Node<T>& self) {
        auto* dq = grad_of(self, 0);
        auto* dk = grad_of(self, 1);
        auto* dv = grad_of(self, 2);
        const T* qv = self.inputs[0]->value.data.data();
        const T* kv = self.inputs[1]->value.data.data();
        const T* vv = self.inputs[2]->value.data.data();
        std::vector<T> dp;
        for (std::size_t b = 0; b < batch; ++b) {
          const auto& idx = keys[b];
          const std::size_t na = idx.size();
          dp.resize(na);
          for (std::size_t h = 0; h < n_heads; ++h) {
            for (std::size_t i = 0; i < nq; ++i) {
              const T* p = probs.data() + offset[b] + (h * nq + i) * na;
              const T* go = self.grad.data() + b * nq * d + i * d + h * dh;
              T dot = 0;
              for (std::size_t a = 0; a < na; ++a) {
                const std::size_t row = b * nk * d + idx[a] * d + h * dh;
                T s = 0;
                for (std::size_t c = 0; c < dh; ++c) s += go[c] * vv[row + c];
                dp[a] = s;
                dot += p[a] * s;
                if (dv)
                  for (std::size_t c = 0; c < dh; ++c) (*dv)[row + c] += p[a] * go[c];
              }
              const std::size_t qrow = b * nq * d + i * d + h * dh;
              for (std::size_t a = 0; a < na; ++a) {
                const T ds = p[a] * (dp[a] - dot) * scl;
                if (ds == T(0)) continue;
                const std::size_t row = b * nk * d + idx[a] * d + h * dh;
                if (dq)
                  for (std::size_t c = 0; c < dh; ++c) (*dq)[qrow + c] += ds * kv[row + c];
                if (dk)
                  for (std::size_t c = 0; c < dh; ++c) (*dk)[row + c] += ds * qv[qrow + c];
              }
            }
          }
        }
      });
}

template <class T>
Var<T> masked_mean(const Var<T>& x, const std::vector<std::uint8_t>& mask) {
  require(x.value().rank() == 3, "masked_mean: expected [B,N,D]");
  const std::size_t batch = x.value().dim(0), n = x.value().dim(1), d = x.value().dim(2);
  require(mask.size() == batch * n, "masked_mean: mask length mismatch");
  Tensor<T> y({batch, d});
  std::vector<T> counts(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.value().data.data() + b * n * d;
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < n; ++j)
      if (mask[b * n + j]) idx.push_back(j);
    if (idx.empty()) throw std::invalid_argument("masked_mean: no active rows");
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) {
      return row_less(xb + a * d, xb + c * d, d);
    });
    T* yb = y.data.data() + b * d;
    for (auto j : idx)
      for (std::size_t c = 0; c < d; ++c) yb[c] += xb[j * d + c];
    counts[b] = T(idx.size());
    for (std::size_t c = 0; c < d; ++c) yb[c] /= counts[b];
  }
  return make_result<T>(std::move(y), {&x}, "masked_mean",
                        [batch, n, d, mask, counts = std::move(counts)](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < n; ++j) {
          if (!mask[b * n + j]) continue;
          for (std::size_t c = 0; c < d; ++c)
            (*g)[(b * n + j) * d + c] += self.grad[b * d + c] / counts[b];
        }
  });
}

template <class T>
Var<T> concat_broadcast(const Var<T>& x, const Var<T>& z, bool z_first) {
  require(x.value().rank() == 3 && z.value().rank() == 2, "concat_broadcast: expected [B,N,D1], [B,D2]");
  const std::size_t batch = x.value().dim(0), n = x.value().dim(1), d1 = x.value().dim(2);
  const std::size_t d2 = z.value().dim(1);
  require(z.value().dim(0) == batch, "concat_broadcast: batch mismatch");
  const std::size_t w = d1 + d2;
  const std::size_t xo = z_first ? d2 : 0, zo = z_first ? 0 : d1;
  Tensor<T> y({batch, n, w});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < n; ++j) {
      T* yr = y.data.data() + (b * n + j) * w;
      std::copy_n(x.value().data.data() + (b * n + j) * d1, d1, yr + xo);
      std::copy_n(z.value().data.data() + b * d2, d2, yr + zo);
    }
  return make_result<T>(std::move(y), {&x, &z}, "concat_broadcast",
                        [batch, n, d1, d2, w, xo, zo](Node<T>& self) {
    auto* gx = grad_of(self, 0);
    auto* gz = grad_of(self, 1);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < n; ++j) {
        const T* gy = self.grad.data() + (b * n + j) * w;
        if (gx)
          for (std::size_t c = 0; c < d1; ++c) (*gx)[(b * n + j) * d1 + c] += gy[xo + c];
        if (gz)
          for (std::size_t c = 0; c < d2; ++c) (*gz)[b * d2 + c] += gy[zo + c];
      }
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t w = x.value().cols();
  require(begin <= end && end <= w, "slice_cols: bad range");
  const std::size_t rows = x.value().rows(), n = end - begin;
  Shape shape = x.shape();
  shape.back() = n;
  Tensor<T> y(shape);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.value().data.data() + r * w + begin, n, y.data.data() + r * n);
  return make_result<T>(std::move(y), {&x}, "slice_cols", [rows, w, begin, n](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n; ++c) (*g)[r * w + begin + c] += self.grad[r * n + c];
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  require(numel(shape) == x.size(), "reshape: element count mismatch");
  Tensor<T> y(std::move(shape), x.value().data);
  return make_result<T>(std::move(y), {&x}, "reshape", [](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

template <class T>
Var<T> tile(const Var<T>& x, std::size_t batch) {
  require(x.value().rank() == 2, "tile: expected [N,D]");
  const std::size_t n = x.size();
  Tensor<T> y({batch, x.value().dim(0), x.value().dim(1)});
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(x.value().data.data(), n, y.data.data() + b * n);
  return make_result<T>(std::move(y), {&x}, "tile", [batch, n](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[b * n + i];
  });
}

template <class T>
Var<T> overwrite_first_row(const Var<T>& x, const Var<T>& token) {
  require(x.value().rank() == 3, "overwrite_first_row: expected [B,N,D]");
  const std::size_t batch = x.value().dim(0), n = x.value().dim(1), d = x.value().dim(2);
  require(token.size() == d, "overwrite_first_row: token width mismatch");
  require(n >= 1, "overwrite_first_row: no rows");
  Tensor<T> y = x.value();
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(token.value().data.data(), d, y.data.data() + b * n * d);
  return make_result<T>(std::move(y), {&x, &token}, "overwrite_first_row", [batch, n, d](Node<T>& self) {
    if (auto* gx = grad_of(self, 0))
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = d; i < n * d; ++i) (*gx)[b * n * d + i] += self.grad[b * n * d + i];
    if (auto* gt = grad_of(self, 1))
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < d; ++c) (*gt)[c] += self.grad[b * n * d + c];
  });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  Tensor<T> y(Shape{});
  for (const T v : x.value().data) y[0] += v;
  return make_result<T>(std::move(y), {&x}, "sum", [](Node<T>& self) {
    if (auto* g = grad_of(self, 0))
      for (auto& v : *g) v += self.grad[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  require(x.size() > 0, "mean: empty tensor");
  return scale(sum(x), T(1) / T(x.size()));
}

template <class T>
Var<T> weighted_sq_dist(const Var<T>& pred, const Tensor<T>& targets, const Tensor<T>& weights,
                        const Tensor<T>& col_mask) {
  require(pred.value().rank() == 3 && targets.rank() == 3 && weights.rank() == 3,
          "weighted_sq_dist: expected rank-3 inputs");
  const std::size_t batch = pred.value().dim(0), s = pred.value().dim(1), w = pred.value().dim(2);
  const std::size_t t = targets.dim(1);
  require(targets.dim(0) == batch && targets.dim(2) == w, "weighted_sq_dist: target shape");
  require(weights.shape == Shape({batch, s, t}), "weighted_sq_dist: weight shape");
  require(col_mask.shape == targets.shape, "weighted_sq_dist: mask shape");
  Tensor<T> y(Shape{});
  const T* p = pred.value().data.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < t; ++j) {
        const T wij = weights[(b * s + i) * t + j];
        if (wij == T(0)) continue;
        const T* pr = p + (b * s + i) * w;
        const T* tr = targets.data.data() + (b * t + j) * w;
        const T* mr = col_mask.data.data() + (b * t + j) * w;
        T acc = 0;
        for (std::size_t c = 0; c < w; ++c) acc += mr[c] * (pr[c] - tr[c]) * (pr[c] - tr[c]);
        y[0] += wij * acc;
      }
  return make_result<T>(std::move(y), {&pred}, "weighted_sq_dist",
                        [batch, s, t, w, targets, weights, col_mask](Node<T>& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const T* p = self.inputs[0]->value.data.data();
    const T go = self.grad[0];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < t; ++j) {
          const T wij = weights[(b * s + i) * t + j];
          if (wij == T(0)) continue;
          const T* pr = p + (b * s + i) * w;
          const T* tr = targets.data.data() + (b * t + j) * w;
          const T* mr = col_mask.data.data() + (b * t + j) * w;
          T* gr = g->data() + (b * s + i) * w;
          for (std::size_t c = 0; c < w; ++c) gr[c] += go * wij * T(2) * mr[c] * (pr[c] - tr[c]);
        }
  });
}

#define VETTA_INSTANTIATE_OPS(T)                                                                 \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                           \
  template Var<T> add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale(const Var<T>&, T);                                                       \
  template Var<T> add_const(const Var<T>&, const Tensor<T>&);                                    \
  template Var<T> mul_const(const Var<T>&, const Tensor<T>&);                                    \
  template Var<T> square(const Var<T>&);                                                         \
  template Var<T> exp(const Var<T>&);                                                            \
  template Var<T> gelu(const Var<T>&);                                                           \
  template Var<T> sigmoid_columns(const Var<T>&, const std::vector<std::size_t>&);               \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                    \
  template Var<T> attention(const Var<T>&, const Var<T>&, const Var<T>&,                         \
                            const std::vector<std::uint8_t>&, std::size_t);                      \
  template Var<T> masked_mean(const Var<T>&, const std::vector<std::uint8_t>&);                  \
  template Var<T> concat_broadcast(const Var<T>&, const Var<T>&, bool);                          \
  template Var<T> slice_cols(const Var<T>&, std::size_t, std::size_t);                           \
  template Var<T> reshape(const Var<T>&, Shape);                                                 \
  template Var<T> tile(const Var<T>&, std::size_t);                                              \
  template Var<T> overwrite_first_row(const Var<T>&, const Var<T>&);                             \
  template Var<T> sum(const Var<T>&);                                                            \
  template Var<T> mean(const Var<T>&);                                                           \
  template Var<T> weighted_sq_dist(const Var<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                   const Tensor<T>&);

VETTA_INSTANTIATE_OPS(float)
VETTA_INSTANTIATE_OPS(double)

}  // namespace vetta::nn
