#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latentlab/core/error.hpp"
#include "latentlab/numerics/kernels.hpp"
#include "latentlab/numerics/tensor.hpp"

namespace latentlab {

/// Named trainable tensors with gradient buffers of matching shape.
template <class T>
class ParameterSet {
 public:
  struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
  };

  std::size_t add(std::string name, Tensor<T> value) {
    Tensor<T> grad(value.shape());
    params_.push_back({std::move(name), std::move(value), std::move(grad)});
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    throw ConfigError("no parameter named " + name);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T{});
  }

 private:
  std::vector<Parameter> params_;
};

/// Token ranges belonging to independent sequences inside one stacked
/// [rows x d] batch, plus an optional per-row key mask (0 = not attendable).
struct AttentionLayout {
  std::vector<std::pair<std::size_t, std::size_t>> segments;  // (first row, length)
  std::vector<std::uint8_t> key_mask;                          // empty = everything attendable
  std::vector<std::uint8_t> groups;                            // empty = no group restriction
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order, so backward() walks the vector once from the end.
template <class T>
class Graph {
 public:
  struct Var {
    int id = -1;
  };

  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const { return record_; }
  std::size_t node_count() const { return nodes_.size(); }

  const Tensor<T>& value(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.ref ? *n.ref : n.value;
  }

  /// Gradient of the last backward() target w.r.t. a non-parameter node.
  const Tensor<T>& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }

  Var constant(Tensor<T> t) { return push(std::move(t), false); }

  /// Leaf bound to a parameter; gradients accumulate into its grad buffer.
  Var param(typename ParameterSet<T>::Parameter& p) {
    Node n;
    n.ref = &p.value;
    n.needs_grad = record_;
    n.param_grad = &p.grad;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size() - 1)};
  }

  /// Differentiable leaf that owns its value (used by tests).
  Var leaf(Tensor<T> t) { return push(std::move(t), record_); }

  Var matmul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
      throw DimensionError("matmul shape mismatch: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> out({m, n});
    kernels::gemm_nn(A.data(), B.data(), out.data(), m, k, n, false);
    Var r = push(std::move(out), needs(a) || needs(b));
    on_backward(r, [this, a, b, r, m, k, n] {
      const auto& G = grad_of(r);
      if (needs(a)) kernels::gemm_nt_acc(G.data(), value(b).data(), gbuf(a).data(), m, n, k);
      if (needs(b)) kernels::gemm_tn_acc(value(a).data(), G.data(), gbuf(b).data(), m, k, n);
    });
    return r;
  }

  Var add(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.shape() != B.shape())
      throw DimensionError("add shape mismatch: " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    Var r = push(std::move(out), needs(a) || needs(b));
    on_backward(r, [this, a, b, r] {
      const auto& G = grad_of(r);
      if (needs(a)) accumulate(gbuf(a), G);
      if (needs(b)) accumulate(gbuf(b), G);
    });
    return r;
  }

  /// a[r x n] + bias broadcast over rows (bias holds n values).
  Var add_row(Var a, Var bias) {
    const auto& A = value(a);
    const auto& B = value(bias);
    const std::size_t rows = A.rows(), n = A.cols();
    if (B.size() != n) throw DimensionError("add_row bias width mismatch");
    Tensor<T> out = A;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += B[j];
    Var r = push(std::move(out), needs(a) || needs(bias));
    on_backward(r, [this, a, bias, r, rows, n] {
      const auto& G = grad_of(r);
      if (needs(a)) accumulate(gbuf(a), G);
      if (needs(bias)) {
        auto& gb = gbuf(bias);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += G[i * n + j];
      }
    });
    return r;
  }

  Var mul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.shape() != B.shape()) throw DimensionError("mul shape mismatch");
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    Var r = push(std::move(out), needs(a) || needs(b));
    on_backward(r, [this, a, b, r] {
      const auto& G = grad_of(r);
      if (needs(a)) {
        auto& ga = gbuf(a);
        const auto& B = value(b);
        for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * B[i];
      }
      if (needs(b)) {
        auto& gb = gbuf(b);
        const auto& A = value(a);
        for (std::size_t i = 0; i < G.size(); ++i) gb[i] += G[i] * A[i];
      }
    });
    return r;
  }

  Var scale(Var a, T s) {
    Tensor<T> out = value(a);
    for (auto& x : out.vec()) x *= s;
    Var r = push(std::move(out), needs(a));
    on_backward(r, [this, a, r, s] {
      const auto& G = grad_of(r);
      auto& ga = gbuf(a);
      for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * s;
    });
    return r;
  }

  Var sum(Var a) {
    T s{};
    for (T x : value(a).vec()) s += x;
    Var r = push(Tensor<T>({1}, std::vector<T>{s}), needs(a));
    on_backward(r, [this, a, r] {
      const T g = grad_of(r)[0];
      for (auto& x : gbuf(a).vec()) x += g;
    });
    return r;
  }

  /// tanh-approximated GELU (smooth, so finite-difference checks are clean).
  Var gelu(Var a) {
    const auto& A = value(a);
    Tensor<T> out(A.shape());
    std::vector<T> th(A.size());
    const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    for (std::size_t i = 0; i < A.size(); ++i) {
      const T x = A[i];
      th[i] = std::tanh(c * (x + T(0.044715) * x * x * x));
      out[i] = T(0.5) * x * (T{1} + th[i]);
    }
    Var r = push(std::move(out), needs(a));
    on_backward(r, [this, a, r, c, th = std::move(th)] {
      const auto& G = grad_of(r);
      const auto& A = value(a);
      auto& ga = gbuf(a);
      for (std::size_t i = 0; i < G.size(); ++i) {
        const T x = A[i], t = th[i];
        const T du = c * (T{1} + T(3 * 0.044715) * x * x);
        ga[i] += G[i] * (T(0.5) * (T{1} + t) + T(0.5) * x * (T{1} - t * t) * du);
      }
    });
    return r;
  }

  /// Row-wise layer normalisation with affine gain and bias ([1 x n] each).
  Var layernorm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const auto& X = value(x);
    const auto& Gm = value(gain);
    const auto& Bt = value(bias);
    const std::size_t rows = X.rows(), n = X.cols();
    if (Gm.size() != n || Bt.size() != n) throw DimensionError("layernorm parameter width mismatch");
    Tensor<T> out(X.shape());
    std::vector<T> xhat(X.size()), inv(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const T* xi = X.data() + i * n;
      T mean{};
      for (std::size_t j = 0; j < n; ++j) mean += xi[j];
      mean /= static_cast<T>(n);
      T var{};
      for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
      var /= static_cast<T>(n);
      inv[i] = T{1} / std::sqrt(var + eps);
      for (std::size_t j = 0; j < n; ++j) {
        xhat[i * n + j] = (xi[j] - mean) * inv[i];
        out[i * n + j] = xhat[i * n + j] * Gm[j] + Bt[j];
      }
    }
    Var r = push(std::move(out), needs(x) || needs(gain) || needs(bias));
    on_backward(r, [this, x, gain, bias, r, rows, n, xhat = std::move(xhat), inv = std::move(inv)] {
      const auto& G = grad_of(r);
      const auto& Gm = value(gain);
      if (needs(gain) || needs(bias)) {
        auto* gg = needs(gain) ? &gbuf(gain) : nullptr;
        auto* gb = needs(bias) ? &gbuf(bias) : nullptr;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            if (gg) (*gg)[j] += G[i * n + j] * xhat[i * n + j];
            if (gb) (*gb)[j] += G[i * n + j];
          }
      }
      if (!needs(x)) return;
      auto& gx = gbuf(x);
      std::vector<T> dxh(n);
      for (std::size_t i = 0; i < rows; ++i) {
        T m1{}, m2{};
        for (std::size_t j = 0; j < n; ++j) {
          dxh[j] = G[i * n + j] * Gm[j];
          m1 += dxh[j];
          m2 += dxh[j] * xhat[i * n + j];
        }
        m1 /= static_cast<T>(n);
        m2 /= static_cast<T>(n);
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += inv[i] * (dxh[j] - m1 - xhat[i * n + j] * m2);
      }
    });
    return r;
  }

  /// out[n_rows x d] with out[dst[k]] += table[idx[k]]; other rows are zero.
  Var embed(Var table, std::vector<std::size_t> idx, std::vector<std::size_t> dst, std::size_t n_rows) {
    const auto& Tb = value(table);
    if (idx.size() != dst.size()) throw DimensionError("embed index/destination length mismatch");
    const std::size_t d = Tb.cols();
    Tensor<T> out({n_rows, d});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= Tb.rows() || dst[k] >= n_rows) throw DimensionError("embed index out of range");
      const T* src = Tb.data() + idx[k] * d;
      T* o = out.data() + dst[k] * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += src[j];
    }
    Var r = push(std::move(out), needs(table));
    on_backward(r, [this, table, r, d, idx = std::move(idx), dst = std::move(dst)] {
      const auto& G = grad_of(r);
      auto& gt = gbuf(table);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const T* g = G.data() + dst[k] * d;
        T* o = gt.data() + idx[k] * d;
        for (std::size_t j = 0; j < d; ++j) o[j] += g[j];
      }
    });
    return r;
  }

  /// out[rows.size() x d] with out[k] = x[rows[k]].
  Var gather_rows(Var x, std::vector<std::size_t> rows) {
    const auto& X = value(x);
    const std::size_t d = X.cols();
    Tensor<T> out({rows.size(), d});
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k] >= X.rows()) throw DimensionError("gather_rows index out of range");
      std::copy_n(X.data() + rows[k] * d, d, out.data() + k * d);
    }
    Var r = push(std::move(out), needs(x));
    on_backward(r, [this, x, r, d, rows = std::move(rows)] {
      const auto& G = grad_of(r);
      auto& gx = gbuf(x);
      for (std::size_t k = 0; k < rows.size(); ++k)
        for (std::size_t j = 0; j < d; ++j) gx[rows[k] * d + j] += G[k * d + j];
    });
    return r;
  }

  /// out[n_rows x d] with out[dst[k]] = x[k]; unlisted rows are zero.
  Var scatter_rows(Var x, std::vector<std::size_t> dst, std::size_t n_rows) {
    const auto& X = value(x);
    const std::size_t d = X.cols();
    if (dst.size() != X.rows()) throw DimensionError("scatter_rows destination count mismatch");
    Tensor<T> out({n_rows, d});
    for (std::size_t k = 0; k < dst.size(); ++k) {
      if (dst[k] >= n_rows) throw DimensionError("scatter_rows index out of range");
      std::copy_n(X.data() + k * d, d, out.data() + dst[k] * d);
    }
    Var r = push(std::move(out), needs(x));
    on_backward(r, [this, x, r, d, dst = std::move(dst)] {
      const auto& G = grad_of(r);
      auto& gx = gbuf(x);
      for (std::size_t k = 0; k < dst.size(); ++k)
        for (std::size_t j = 0; j < d; ++j) gx[k * d + j] += G[dst[k] * d + j];
    });
    return r;
  }

  /// Multi-head scaled dot-product self-attention over independent segments.
  /// q, k, v are [rows x d]; heads split the d columns evenly.
  Var attention(Var q, Var k, Var v, std::size_t heads, const AttentionLayout& layout) {
    const auto& Q = value(q);
    const auto& K = value(k);
    const auto& V = value(v);
    if (Q.shape() != K.shape() || Q.shape() != V.shape() || Q.rank() != 2)
      throw DimensionError("attention expects q, k, v of identical [rows x d] shape");
    const std::size_t rows = Q.dim(0), d = Q.dim(1);
    if (heads == 0 || d % heads != 0) throw DimensionError("model width not divisible by head count");
    if (!layout.key_mask.empty() && layout.key_mask.size() != rows)
      throw DimensionError("attention key mask length mismatch");
    if (!layout.groups.empty() && layout.groups.size() != rows) throw DimensionError("attention group length mismatch");
    const std::size_t width = d / heads;
    const T scale = T{1} / std::sqrt(static_cast<T>(width));
    Tensor<T> out({rows, d});
    // probabilities per (segment, head), concatenated
    std::vector<std::size_t> prob_offset;
    std::size_t total = 0;
    for (auto [start, len] : layout.segments) {
      if (start + len > rows) throw DimensionError("attention segment out of range");
      prob_offset.push_back(total);
      total += heads * len * len;
    }
    std::vector<T> probs(total);
    for (std::size_t s = 0; s < layout.segments.size(); ++s) {
      auto [start, len] = layout.segments[s];
      const std::uint8_t* mask = layout.key_mask.empty() ? nullptr : layout.key_mask.data() + start;
      const std::uint8_t* group = layout.groups.empty() ? nullptr : layout.groups.data() + start;
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * width;
        kernels::attention_head_forward<T>({Q.data() + start * d, d, off}, {K.data() + start * d, d, off},
                                           {V.data() + start * d, d, off}, {out.data() + start * d, d, off}, len,
                                           width, mask, scale, probs.data() + prob_offset[s] + h * len * len, group);
      }
    }
    Var r = push(std::move(out), needs(q) || needs(k) || needs(v));
    on_backward(r, [this, q, k, v, r, heads, width, d, scale, segments = layout.segments,
                    prob_offset = std::move(prob_offset), probs = std::move(probs)] {
      const auto& G = grad_of(r);
      // attention backward touches all three inputs; allocate scratch for
      // any input that does not need a gradient.
      Tensor<T> scratch_q, scratch_k, scratch_v;
      auto& gq = needs(q) ? gbuf(q) : (scratch_q = Tensor<T>(value(q).shape()));
      auto& gk = needs(k) ? gbuf(k) : (scratch_k = Tensor<T>(value(k).shape()));
      auto& gv = needs(v) ? gbuf(v) : (scratch_v = Tensor<T>(value(v).shape()));
      const auto& Q = value(q);
      const auto& K = value(k);
      const auto& V = value(v);
      for (std::size_t s = 0; s < segments.size(); ++s) {
        auto [start, len] = segments[s];
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * width;
          const std::size_t base = start * d;
          kernels::attention_head_backward<T>({Q.data() + base, d, off}, {K.data() + base, d, off},
                                              {V.data() + base, d, off}, {G.data() + base, d, off},
                                              {gq.data() + base, d, off}, {gk.data() + base, d, off},
                                              {gv.data() + base, d, off}, len, width, scale,
                                              probs.data() + prob_offset[s] + h * len * len);
        }
      }
    });
    return r;
  }

  /// Mean softmax cross-entropy of logits [b x c] against class targets.
  Var softmax_cross_entropy(Var logits, std::vector<std::size_t> targets) {
    const auto& L = value(logits);
    const std::size_t b = L.dim(0), c = L.dim(1);
    if (targets.size() != b) throw DimensionError("cross-entropy target count mismatch");
    Tensor<T> probs({b, c});
    T loss{};
    for (std::size_t i = 0; i < b; ++i) {
      if (targets[i] >= c) throw DimensionError("cross-entropy target out of range");
      const T* li = L.data() + i * c;
      T mx = li[0];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, li[j]);
      T z{};
      for (std::size_t j = 0; j < c; ++j) z += std::exp(li[j] - mx);
      for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(li[j] - mx) / z;
      loss += -(li[targets[i]] - mx - std::log(z));
    }
    loss /= static_cast<T>(b);
    Var r = push(Tensor<T>({1}, std::vector<T>{loss}), needs(logits));
    on_backward(r, [this, logits, r, b, c, probs = std::move(probs), targets = std::move(targets)] {
      const T g = grad_of(r)[0] / static_cast<T>(b);
      auto& gl = gbuf(logits);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j)
          gl[i * c + j] += g * (probs[i * c + j] - (j == targets[i] ? T{1} : T{0}));
    });
    return r;
  }

  /// Reverse sweep from a scalar node. Parameter gradients accumulate into
  /// their ParameterSet buffers (callers zero them between steps).
  void backward(Var loss) {
    if (!record_) throw UsageError("backward() on a graph built without gradient recording");
    const auto& L = value(loss);
    if (L.size() != 1) throw UsageError("backward() needs a scalar loss, got shape " + shape_str(L.shape()));
    gbuf(loss)[0] += T{1};
    for (std::size_t i = static_cast<std::size_t>(loss.id) + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back && n.has_grad) n.back();
    }
  }

  static T gelu_value(T x) {
    const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    return T(0.5) * x * (T{1} + std::tanh(c * (x + T(0.044715) * x * x * x)));
  }

  static T gelu_slope(T x) {
    const T c = static_cast<T>(0.7978845608028654);
    const T u = c * (x + T(0.044715) * x * x * x);
    const T t = std::tanh(u);
    const T du = c * (T{1} + T(3 * 0.044715) * x * x);
    return T(0.5) * (T{1} + t) + T(0.5) * x * (T{1} - t * t) * du;
  }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    Tensor<T>* param_grad = nullptr;
    std::function<void()> back;
    bool needs_grad = false;
    bool has_grad = false;
  };

  Var push(Tensor<T> t, bool needs_grad) {
    Node n;
    n.value = std::move(t);
    n.needs_grad = record_ && needs_grad;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size() - 1)};
  }

  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

  template <class F>
  void on_backward(Var r, F&& f) {
    Node& n = nodes_[static_cast<std::size_t>(r.id)];
    if (n.needs_grad) n.back = std::forward<F>(f);
  }

  const Tensor<T>& grad_of(Var v) { return gbuf(v); }

  Tensor<T>& gbuf(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    n.has_grad = true;
    if (n.param_grad) return *n.param_grad;
    if (n.grad.size() != value(v).size() || n.grad.shape() != value(v).shape()) n.grad = Tensor<T>(value(v).shape());
    return n.grad;
  }

  static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace latentlab
