#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "latentlab/core/rng.hpp"
#include "latentlab/numerics/adam.hpp"
#include "latentlab/numerics/autodiff.hpp"
#include "latentlab/numerics/kernels.hpp"
#include "latentlab/numerics/tensor.hpp"

using namespace latentlab;

namespace {

template <class T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t(std::move(s));
  for (auto& x : t.vec()) x = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
Tensor<T> naive_matmul(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      T s{};
      for (std::size_t p = 0; p < a.dim(1); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  Tensor<T> t({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace

template <class T>
class MatmulTyped : public ::testing::Test {};
using FloatTypes = ::testing::Types<float, double>;
TYPED_TEST_SUITE(MatmulTyped, FloatTypes);

TYPED_TEST(MatmulTyped, MatchesTripleLoopBitwise) {
  Rng rng(11);
  const std::vector<std::array<std::size_t, 3>> shapes = {{1, 1, 1},  {3, 5, 7},   {6, 64, 32}, {7, 13, 33},
                                                          {13, 64, 256}, {50, 17, 70}, {2, 0, 4},  {0, 3, 3}};
  for (auto [m, k, n] : shapes) {
    auto a = random_tensor<TypeParam>({m, k}, rng);
    auto b = random_tensor<TypeParam>({k, n}, rng);
    EXPECT_EQ(kernels::matmul(a, b), naive_matmul(a, b)) << m << "x" << k << "x" << n;
  }
}

TYPED_TEST(MatmulTyped, TransposedAccumulateVariants) {
  Rng rng(12);
  const std::size_t m = 9, k = 19, n = 37;
  auto a = random_tensor<TypeParam>({m, k}, rng);
  auto d = random_tensor<TypeParam>({m, n}, rng);
  Tensor<TypeParam> c({k, n});
  kernels::gemm_tn_acc(a.data(), d.data(), c.data(), m, k, n);
  EXPECT_EQ(c, naive_matmul(transpose(a), d));

  auto b = random_tensor<TypeParam>({k, n}, rng);
  Tensor<TypeParam> c2({m, k});
  kernels::gemm_nt_acc(d.data(), b.data(), c2.data(), m, n, k);
  EXPECT_EQ(c2, naive_matmul(d, transpose(b)));
}

TEST(Matmul, RejectsMismatchedShapes) {
  EXPECT_THROW(kernels::matmul(Tensor<double>({2, 3}), Tensor<double>({4, 2})), DimensionError);
}

TEST(Attention, MatchesBruteForceSoftmax) {
  Rng rng(3);
  const std::size_t n = 6, h = 8;
  auto q = random_tensor<double>({n, h}, rng), k = random_tensor<double>({n, h}, rng), v = random_tensor<double>({n, h}, rng);
  std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0, 1};
  Tensor<double> w;
  auto out = kernels::softmax_attention(q, k, v, mask, &w);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> e(n, 0.0L);
    long double z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[j]) continue;
      long double s = 0;
      for (std::size_t c = 0; c < h; ++c) s += static_cast<long double>(q(i, c)) * k(j, c);
      e[j] = std::exp(s / std::sqrt(static_cast<long double>(h)));
      z += e[j];
    }
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(w(i, j), static_cast<double>(e[j] / z), 1e-14);
    for (std::size_t c = 0; c < h; ++c) {
      long double o = 0;
      for (std::size_t j = 0; j < n; ++j) o += e[j] / z * v(j, c);
      EXPECT_NEAR(out(i, c), static_cast<double>(o), 1e-14);
    }
  }
}

TEST(Attention, FullyMaskedQueryGivesZeroRow) {
  Rng rng(4);
  auto q = random_tensor<double>({3, 4}, rng), k = q, v = q;
  std::vector<std::uint8_t> mask(3, 0);
  Tensor<double> w;
  auto out = kernels::softmax_attention(q, k, v, mask, &w);
  for (double x : out.vec()) EXPECT_EQ(x, 0.0);
  for (double x : w.vec()) EXPECT_EQ(x, 0.0);
}

TEST(Attention, GroupsAttendOnlyWithinThemselves) {
  Rng rng(6);
  const std::size_t n = 7, h = 4;
  auto q = random_tensor<double>({n, h}, rng), k = random_tensor<double>({n, h}, rng), v = random_tensor<double>({n, h}, rng);
  const std::vector<std::uint8_t> groups = {0, 1, 1, 0, 1, 0, 0};
  Graph<double> g(false);
  auto out = g.value(g.attention(g.leaf(q), g.leaf(k), g.leaf(v), 1, {{{0, n}}, {}, groups}));
  for (std::uint8_t grp : {0, 1}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
      if (groups[i] == grp) rows.push_back(i);
    auto pick = [&](const Tensor<double>& t) {
      Tensor<double> r({rows.size(), h});
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < h; ++c) r(i, c) = t(rows[i], c);
      return r;
    };
    auto want = kernels::softmax_attention(pick(q), pick(k), pick(v));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < h; ++c) EXPECT_EQ(out(rows[i], c), want(i, c));
  }
}

// ---- gradient checks -------------------------------------------------------

namespace {

using Var = Graph<double>::Var;
using Builder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

// Central differences on every leaf entry against the tape's gradient.
void expect_gradients(std::vector<Tensor<double>> inputs, const Builder& f, double tol = 1e-6) {
  Graph<double> g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.leaf(t));
  g.backward(f(g, leaves));
  const double h = 1e-5;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const Tensor<double> analytic = g.grad(leaves[a]);
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      auto eval = [&](double delta) {
        auto in = inputs;
        in[a][i] += delta;
        Graph<double> gg(false);
        std::vector<Var> ls;
        for (const auto& t : in) ls.push_back(gg.leaf(t));
        return gg.value(f(gg, ls))[0];
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double an = analytic.size() ? analytic[i] : 0.0;
      EXPECT_NEAR(an, numeric, tol * std::max(1.0, std::abs(numeric))) << "input " << a << " index " << i;
    }
  }
}

// Reduces a node to a scalar through fixed random weights so every output
// entry contributes a distinct gradient.
Var project(Graph<double>& g, Var x, std::uint64_t seed = 99) {
  Rng rng(seed);
  auto w = random_tensor<double>(g.value(x).shape(), rng);
  return g.sum(g.mul(x, g.constant(w)));
}

}  // namespace

TEST(GradCheck, MatmulAddMulScale) {
  Rng rng(1);
  expect_gradients({random_tensor<double>({3, 4}, rng), random_tensor<double>({4, 5}, rng), random_tensor<double>({3, 5}, rng)},
                   [](Graph<double>& g, const std::vector<Var>& x) {
                     auto y = g.matmul(x[0], x[1]);
                     return project(g, g.scale(g.mul(g.add(y, x[2]), y), 0.5));
                   });
}

TEST(GradCheck, AddRowGeluLayernorm) {
  Rng rng(2);
  expect_gradients({random_tensor<double>({4, 6}, rng, -2, 2), random_tensor<double>({6}, rng),
                    random_tensor<double>({6}, rng, 0.5, 1.5), random_tensor<double>({6}, rng)},
                   [](Graph<double>& g, const std::vector<Var>& x) {
                     auto y = g.gelu(g.add_row(x[0], x[1]));
                     return project(g, g.layernorm(y, x[2], x[3]));
                   });
}

TEST(GradCheck, EmbedGatherScatter) {
  Rng rng(3);
  expect_gradients({random_tensor<double>({5, 3}, rng)}, [](Graph<double>& g, const std::vector<Var>& x) {
    auto e = g.embed(x[0], {4, 1, 1, 0}, {0, 2, 3, 2}, 4);
    auto s = g.scatter_rows(g.gather_rows(e, {3, 2, 0}), {1, 0, 4}, 6);
    return project(g, s);
  });
}

TEST(GradCheck, GroupedAttention) {
  Rng rng(5);
  AttentionLayout layout{{{0, 6}}, {}, {0, 0, 1, 1, 1, 0}};
  expect_gradients({random_tensor<double>({6, 8}, rng), random_tensor<double>({6, 8}, rng), random_tensor<double>({6, 8}, rng)},
                   [&](Graph<double>& g, const std::vector<Var>& x) { return project(g, g.attention(x[0], x[1], x[2], 2, layout)); });
}

TEST(GradCheck, SegmentedMaskedAttention) {
  Rng rng(4);
  AttentionLayout layout{{{0, 3}, {3, 4}}, {1, 1, 0, 1, 0, 1, 1}, {}};
  expect_gradients({random_tensor<double>({7, 8}, rng), random_tensor<double>({7, 8}, rng), random_tensor<double>({7, 8}, rng)},
                   [&](Graph<double>& g, const std::vector<Var>& x) { return project(g, g.attention(x[0], x[1], x[2], 2, layout)); });
}

TEST(GradCheck, SoftmaxCrossEntropy) {
  Rng rng(5);
  expect_gradients({random_tensor<double>({4, 6}, rng, -3, 3)},
                   [](Graph<double>& g, const std::vector<Var>& x) { return g.softmax_cross_entropy(x[0], {0, 5, 2, 2}); });
}

TEST(Autodiff, ParameterGradientsAccumulate) {
  ParameterSet<double> ps;
  ps.add("w", Tensor<double>({2}, std::vector<double>{1.0, -2.0}));
  for (int rep = 0; rep < 2; ++rep) {
    Graph<double> g;
    auto w = g.param(ps[0]);
    g.backward(g.sum(g.mul(w, w)));
  }
  EXPECT_EQ(ps[0].grad[0], 4.0);
  EXPECT_EQ(ps[0].grad[1], -8.0);
  ps.zero_grad();
  EXPECT_EQ(ps[0].grad[0], 0.0);
}

TEST(Autodiff, BackwardNeedsScalarAndRecording) {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({2}));
  EXPECT_THROW(g.backward(x), UsageError);
  Graph<double> off(false);
  auto y = off.sum(off.leaf(Tensor<double>({2})));
  EXPECT_THROW(off.backward(y), UsageError);
}

TEST(Adam, MatchesHandComputedUpdate) {
  ParameterSet<double> ps;
  ps.add("p", Tensor<double>({2}, std::vector<double>{0.5, -1.0}));
  AdamConfig cfg;
  auto st = OptimizerState<double>::for_parameters(ps, cfg);
  const double grads[2][2] = {{0.2, -0.4}, {-0.1, 0.3}};
  double m[2] = {0, 0}, v[2] = {0, 0}, p[2] = {0.5, -1.0};
  for (int t = 1; t <= 2; ++t) {
    for (int i = 0; i < 2; ++i) ps[0].grad[i] = grads[t - 1][i];
    adam_step(st, ps);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      p[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(ps[0].value[i], p[i], 1e-15);
    }
  }
}

TEST(Adam, NonFiniteGradientLeavesParametersUntouched) {
  ParameterSet<double> ps;
  ps.add("p", Tensor<double>({2}, std::vector<double>{1.0, 2.0}));
  auto st = OptimizerState<double>::for_parameters(ps, {});
  ps[0].grad[1] = std::nan("");
  EXPECT_THROW(adam_step(st, ps), NumericError);
  EXPECT_EQ(ps[0].value[0], 1.0);
  EXPECT_EQ(st.step, 0);
}
