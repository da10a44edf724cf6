#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <vector>

#include "latentlab/numerics/tensor.hpp"

namespace latentlab::kernels {

namespace detail {

inline constexpr int kVectorBytes = 64;

template <class T>
struct SimdVec {
  typedef T type __attribute__((vector_size(kVectorBytes)));
};

// Register block: RM rows of C by NV vectors of columns, accumulated over k.
template <class T, std::size_t RM, std::size_t NV>
inline void gemm_block(const T* a, const T* b, T* c, std::size_t k, std::size_t n, std::size_t lda) {
  using V = typename SimdVec<T>::type;
  constexpr std::size_t lanes = kVectorBytes / sizeof(T);
  V acc[RM][NV];
  for (std::size_t r = 0; r < RM; ++r)
    for (std::size_t v = 0; v < NV; ++v) std::memcpy(&acc[r][v], c + r * n + v * lanes, kVectorBytes);
  for (std::size_t p = 0; p < k; ++p) {
    V bv[NV];
    for (std::size_t v = 0; v < NV; ++v) std::memcpy(&bv[v], b + p * n + v * lanes, kVectorBytes);
    for (std::size_t r = 0; r < RM; ++r) {
      const T av = a[r * lda + p];
      for (std::size_t v = 0; v < NV; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (std::size_t r = 0; r < RM; ++r)
    for (std::size_t v = 0; v < NV; ++v) std::memcpy(c + r * n + v * lanes, &acc[r][v], kVectorBytes);
}

}  // namespace detail

// C[M x N] (+)= A[M x K] * B[K x N]. Every C element accumulates its k
// products in ascending order starting from C (or zero), so the blocked
// kernel matches a textbook triple loop bit for bit.
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{});
  constexpr std::size_t RM = 6, NV = 2;
  constexpr std::size_t NB = NV * detail::kVectorBytes / sizeof(T);
  std::size_t j0 = 0;
  for (; j0 + NB <= n; j0 += NB) {
    std::size_t i = 0;
    for (; i + RM <= m; i += RM) detail::gemm_block<T, RM, NV>(a + i * k, b + j0, c + i * n + j0, k, n, k);
    for (; i < m; ++i) detail::gemm_block<T, 1, NV>(a + i * k, b + j0, c + i * n + j0, k, n, k);
  }
  if (j0 < n) {
    for (std::size_t i = 0; i < m; ++i) {
      T* ci = c + i * n;
      const T* ai = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = ai[p];
        const T* bp = b + p * n;
        for (std::size_t j = j0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

// C[K x N] += A^T * D where A is [M x K] and D is [M x N].
template <class T>
void gemm_tn_acc(const T* a, const T* d, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<T> at(m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  gemm_nn(at.data(), d, c, k, m, n, true);
}

// C[M x K] += D * B^T where D is [M x N] and B is [K x N].
template <class T>
void gemm_nt_acc(const T* d, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  std::vector<T> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_nn(d, bt.data(), c, m, n, k, true);
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor<T> c({a.dim(0), b.dim(1)});
  gemm_nn(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1), false);
  return c;
}

/// Strided view of one attention head: row r of the head lives at
/// base[r * stride + offset .. + width).
template <class T>
struct HeadView {
  T* base;
  std::size_t stride;
  std::size_t offset;
  T* row(std::size_t r) const { return base + r * stride + offset; }
};

// Scaled dot-product attention for one head over n positions. `mask[j] == 0`
// marks key j as not attendable; with `group` set, query i only sees keys j
// with group[j] == group[i]. A query whose keys are all masked produces a
// zero output row and an all-zero weight row. `probs` receives n*n weights.
template <class T>
void attention_head_forward(HeadView<const T> q, HeadView<const T> k, HeadView<const T> v, HeadView<T> out,
                            std::size_t n, std::size_t width, const std::uint8_t* mask, T scale, T* probs,
                            const std::uint8_t* group = nullptr) {
  for (std::size_t i = 0; i < n; ++i) {
    T* p = probs + i * n;
    const T* qi = q.row(i);
    T mx = -std::numeric_limits<T>::infinity();
    auto hidden = [&](std::size_t j) { return (mask && !mask[j]) || (group && group[j] != group[i]); };
    for (std::size_t j = 0; j < n; ++j) {
      if (hidden(j)) {
        p[j] = T{};
        continue;
      }
      const T* kj = k.row(j);
      T s{};
      for (std::size_t c = 0; c < width; ++c) s += qi[c] * kj[c];
      s *= scale;
      p[j] = s;
      mx = std::max(mx, s);
    }
    T* oi = out.row(i);
    std::fill(oi, oi + width, T{});
    if (mx == -std::numeric_limits<T>::infinity()) {
      std::fill(p, p + n, T{});
      continue;
    }
    T z{};
    for (std::size_t j = 0; j < n; ++j) {
      if (hidden(j)) continue;
      p[j] = std::exp(p[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (hidden(j)) continue;
      p[j] /= z;
      const T w = p[j];
      const T* vj = v.row(j);
      for (std::size_t c = 0; c < width; ++c) oi[c] += w * vj[c];
    }
  }
}

// Backward of attention_head_forward. Gradients are accumulated into dq/dk/dv.
template <class T>
void attention_head_backward(HeadView<const T> q, HeadView<const T> k, HeadView<const T> v, HeadView<const T> dout,
                             HeadView<T> dq, HeadView<T> dk, HeadView<T> dv, std::size_t n, std::size_t width,
                             T scale, const T* probs) {
  std::vector<T> dp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* p = probs + i * n;
    const T* doi = dout.row(i);
    T dot{};
    for (std::size_t j = 0; j < n; ++j) {
      if (p[j] == T{}) {
        dp[j] = T{};
        continue;
      }
      const T* vj = v.row(j);
      T s{};
      for (std::size_t c = 0; c < width; ++c) s += doi[c] * vj[c];
      dp[j] = s;
      dot += s * p[j];
      T* dvj = dv.row(j);
      for (std::size_t c = 0; c < width; ++c) dvj[c] += p[j] * doi[c];
    }
    const T* qi = q.row(i);
    T* dqi = dq.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (p[j] == T{}) continue;
      const T ds = p[j] * (dp[j] - dot) * scale;
      const T* kj = k.row(j);
      T* dkj = dk.row(j);
      for (std::size_t c = 0; c < width; ++c) {
        dqi[c] += ds * kj[c];
        dkj[c] += ds * qi[c];
      }
    }
  }
}

/// Single-head attention on plain tensors: q,k,v are [n x h], mask has n
/// entries (empty span = all attendable). Returns the [n x h] output and,
/// optionally, the [n x n] weight matrix.
template <class T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            std::span<const std::uint8_t> mask = {}, Tensor<T>* weights = nullptr) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) || k.dim(0) != v.dim(0) ||
      q.dim(0) != k.dim(0) || v.dim(1) != q.dim(1))
    throw DimensionError("softmax_attention expects q,k,v of equal shape [n x h]");
  if (!mask.empty() && mask.size() != k.dim(0)) throw DimensionError("attention mask length mismatch");
  const std::size_t n = q.dim(0), h = q.dim(1);
  Tensor<T> out({n, h});
  std::vector<T> probs(n * n);
  const T scale = T{1} / std::sqrt(static_cast<T>(h));
  attention_head_forward<T>({q.data(), h, 0}, {k.data(), h, 0}, {v.data(), h, 0}, {out.data(), h, 0}, n, h,
                            mask.empty() ? nullptr : mask.data(), scale, probs.data());
  if (weights) *weights = Tensor<T>({n, n}, std::move(probs));
  return out;
}

}  // namespace latentlab::kernels
