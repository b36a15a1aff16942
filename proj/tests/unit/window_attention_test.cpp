#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "prodehaze/error.hpp"
#include "prodehaze/haze_mask.hpp"
#include "prodehaze/nn/params.hpp"
#include "prodehaze/seed.hpp"
#include "prodehaze/window_attention.hpp"
#include "test_util.hpp"

using namespace prodehaze;
using prodehaze::testing::central_diff;
using prodehaze::testing::dot;
using prodehaze::testing::rel_err;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Plain scaled dot-product attention with 1/sqrt(N), written out longhand.
ImageTensor plain_attention(const ImageTensor& q, const ImageTensor& k, const ImageTensor& v) {
  const std::size_t n = q.height(), d = q.channels(), dv = v.channels();
  ImageTensor out(n, 1, dv);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += q[i * d + c] * k[j * d + c];
      logits[j] = s / std::sqrt(static_cast<double>(n));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] += logits[j] / z * v[j * dv + c];
  }
  return out;
}

// Sparse-mask-shaped random mask: finite entries in [0,1], `masked` of them -inf.
ImageTensor random_mask(Rng& rng, std::size_t n, std::size_t masked) {
  ImageTensor m = rng.uniform_tensor(n, n, 1);
  std::vector<std::size_t> idx(n * n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < masked; ++i) {
    std::swap(idx[i], idx[i + rng.index(n * n - i)]);
    m[idx[i]] = -kInf;
  }
  return m;
}

ImageTensor permute_rows(const ImageTensor& t, const std::vector<std::size_t>& p) {
  ImageTensor out(t.height(), t.width(), t.channels());
  const std::size_t row = t.width() * t.channels();
  for (std::size_t i = 0; i < p.size(); ++i) std::copy_n(t.data() + p[i] * row, row, out.data() + i * row);
  return out;
}

ImageTensor permute_mask(const ImageTensor& m, const std::vector<std::size_t>& p) {
  ImageTensor out(m.height(), m.width(), 1);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j) out.at(i, j, 0) = m.at(p[i], p[j], 0);
  return out;
}

std::vector<std::size_t> random_perm(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
  return p;
}

nn::ParamSet live_block(std::size_t dim, std::uint64_t seed) {
  nn::ParamSet p;
  add_wst_params(p, "", dim, seed);
  Rng rng(seed + 1);
  for (auto& [name, t] : p)
    for (double& v : t.values()) v += 0.3 * rng.normal();
  return p;
}

}  // namespace

TEST(WindowPartition, Shapes) {
  Rng rng(30);
  const ImageTensor x = rng.normal_tensor(4, 4, 3);
  const WindowGrid g = window_partition(x, 2, 2);
  ASSERT_EQ(g.windows.size(), 4u);
  for (const auto& w : g.windows) EXPECT_EQ(w.height() * w.width(), 4u);
  EXPECT_EQ(window_partition(x, 4, 4).windows.size(), 1u);
  // second window covers columns 2..3 of rows 0..1, row-major
  EXPECT_EQ(g.windows[1][0], x.at(0, 2, 0));
  EXPECT_EQ(g.windows[1][3 * 3], x.at(1, 3, 0));
  EXPECT_THROW(window_partition(x, 3, 2), Error);
}

TEST(WindowPartition, MergeInverts) {
  Rng rng(31);
  const ImageTensor x = rng.normal_tensor(8, 8, 4);
  EXPECT_EQ(window_merge(window_partition(x, 4, 2)), x);
  EXPECT_EQ(window_merge(window_partition(x, 2, 4)), x);
}

TEST(ModulatedAttention, Examples) {
  Rng rng(32);
  const ImageTensor v = rng.normal_tensor(5, 1, 3);
  const ImageTensor zeros(5, 1, 2);
  const AttentionResult r = modulated_attention(zeros, zeros, v, ImageTensor(5, 5, 1, 1.0));
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0;
    for (std::size_t j = 0; j < 5; ++j) mean += v[j * 3 + c] / 5.0;
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(r.output[i * 3 + c], mean, 1e-15);
  }

  const ImageTensor v1 = rng.normal_tensor(1, 1, 3);
  const AttentionResult one = modulated_attention(rng.normal_tensor(1, 1, 2), rng.normal_tensor(1, 1, 2), v1,
                                                  ImageTensor(1, 1, 1, 1.0));
  EXPECT_EQ(one.output, ImageTensor(1, 1, 3, std::vector<double>(v1.values().begin(), v1.values().end())));

  const ImageTensor z2(2, 1, 1);
  const AttentionResult half = modulated_attention(z2, z2, ImageTensor(2, 1, 1, {1.0, 3.0}),
                                                   ImageTensor(2, 2, 1, {1.0, -kInf, 1.0, 1.0}));
  EXPECT_EQ(half.weights[0], 1.0);
  EXPECT_EQ(half.weights[1], 0.0);
  EXPECT_EQ(half.weights[2], 0.5);
  EXPECT_EQ(half.weights[3], 0.5);
  EXPECT_EQ(half.output[0], 1.0);
  EXPECT_EQ(half.output[1], 2.0);
}

TEST(ModulatedAttention, NegativeScoreUnderInfStaysMasked) {
  // q.k < 0 on the masked pair: the entry must not win the softmax.
  const ImageTensor q(2, 1, 1, {1.0, 1.0}), k(2, 1, 1, {1.0, -5.0});
  const AttentionResult r = modulated_attention(q, k, ImageTensor(2, 1, 1, {0.0, 1.0}),
                                                ImageTensor(2, 2, 1, {1.0, -kInf, 1.0, 1.0}));
  EXPECT_EQ(r.weights[1], 0.0);
  EXPECT_EQ(r.weights[0], 1.0);
}

TEST(ModulatedAttention, FullyMaskedRowIsZero) {
  Rng rng(33);
  ImageTensor m(3, 3, 1, 1.0);
  for (std::size_t j = 0; j < 3; ++j) m.at(1, j, 0) = -kInf;
  const AttentionResult r = modulated_attention(rng.normal_tensor(3, 1, 2), rng.normal_tensor(3, 1, 2),
                                                rng.normal_tensor(3, 1, 2), m);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(r.output[2 + c], 0.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.weights.at(1, j, 0), 0.0);
}

TEST(ModulatedAttention, ShapeMismatch) {
  const ImageTensor a(3, 1, 2);
  EXPECT_THROW(modulated_attention(a, ImageTensor(3, 1, 3), a, ImageTensor(3, 3, 1)), Error);
  EXPECT_THROW(modulated_attention(a, a, a, ImageTensor(2, 2, 1)), Error);
}

TEST(ModulatedAttention, RandomProperties) {
  Rng rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(16), d = 1 + rng.index(6);
    const ImageTensor q = rng.normal_tensor(n, 1, d), k = rng.normal_tensor(n, 1, d), v = rng.normal_tensor(n, 1, d);
    const ImageTensor m = random_mask(rng, n, rng.index(n * n));
    const AttentionResult r = modulated_attention(q, k, v, m);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      bool any = false;
      for (std::size_t j = 0; j < n; ++j) {
        const double w = r.weights.at(i, j, 0);
        EXPECT_GE(w, 0.0);
        if (m.at(i, j, 0) == -kInf) EXPECT_EQ(w, 0.0);
        else any = true;
        s += w;
      }
      if (any) EXPECT_NEAR(s, 1.0, 1e-12);
    }

    const ImageTensor plain = plain_attention(q, k, v);
    const ImageTensor ones_out = modulated_attention(q, k, v, ImageTensor(n, n, 1, 1.0)).output;
    for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_NEAR(ones_out[i], plain[i], 1e-12);

    const auto p = random_perm(rng, n);
    const ImageTensor permuted =
        modulated_attention(permute_rows(q, p), permute_rows(k, p), permute_rows(v, p), permute_mask(m, p)).output;
    const ImageTensor expect = permute_rows(r.output, p);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(permuted[i], expect[i], 1e-12);
  }
}

TEST(ModulatedAttention, MaskingMonotonicity) {
  Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(10);
    const ImageTensor q = rng.normal_tensor(n, 1, 3), k = rng.normal_tensor(n, 1, 3), v = rng.normal_tensor(n, 1, 3);
    std::vector<double> mvals(n), w = default_mask_weights(4);
    for (double& x : mvals) x = rng.uniform();
    const ImageTensor corr = correlation_map(mvals, w, w);
    const auto order = topk_indices(corr, n * n);
    const std::size_t k1 = rng.index(n * n), k2 = k1 + 1 + rng.index(n * n - k1);
    const std::vector<IndexPair> small(order.begin(), order.begin() + k1), big(order.begin(), order.begin() + k2);
    const ImageTensor w_small = modulated_attention(q, k, v, build_sparse_mask(corr, small)).weights;
    const ImageTensor w_big = modulated_attention(q, k, v, build_sparse_mask(corr, big)).weights;
    for (std::size_t t = k1; t < k2; ++t) {
      const auto [i, j] = order[t];
      EXPECT_EQ(w_big.at(i, j, 0), 0.0);
      EXPECT_LE(w_big.at(i, j, 0), w_small.at(i, j, 0));
    }
  }
}

TEST(ModulatedAttention, BackwardMatchesFiniteDifferences) {
  Rng rng(36);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4, d = 3;
    ImageTensor q = rng.normal_tensor(n, 1, d), k = rng.normal_tensor(n, 1, d), v = rng.normal_tensor(n, 1, d);
    ImageTensor m = random_mask(rng, n, rng.index(6));
    const ImageTensor r = rng.normal_tensor(n, 1, d);
    auto loss = [&] { return dot(modulated_attention(q, k, v, m).output, r); };
    const AttentionResult fwd = modulated_attention(q, k, v, m);
    const AttentionGrads g = modulated_attention_backward(q, k, v, m, fwd.weights, r);
    for (std::size_t i = 0; i < q.size(); ++i) {
      EXPECT_LT(rel_err(g.dq[i], central_diff(q, i, loss), 1e-6), 1e-4);
      EXPECT_LT(rel_err(g.dk[i], central_diff(k, i, loss), 1e-6), 1e-4);
      EXPECT_LT(rel_err(g.dv[i], central_diff(v, i, loss), 1e-6), 1e-4);
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] == -kInf) {
        EXPECT_EQ(g.dmask[i], 0.0);
        continue;
      }
      EXPECT_LT(rel_err(g.dmask[i], central_diff(m, i, loss), 1e-6), 1e-4);
    }
  }
}

TEST(WstBlock, IdentityAtInit) {
  Rng rng(37);
  nn::ParamSet p;
  add_wst_params(p, "", 6, 99);
  const ImageTensor x = rng.normal_tensor(16, 1, 6);
  EXPECT_EQ(wst_block(x, random_mask(rng, 16, 40), p), x);
}

TEST(WstBlock, PermutationEquivariant) {
  Rng rng(38);
  const nn::ParamSet p = live_block(5, 7);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageTensor x = rng.normal_tensor(16, 1, 5), m = random_mask(rng, 16, 64);
    const auto perm = random_perm(rng, 16);
    const ImageTensor a = permute_rows(wst_block(x, m, p), perm);
    const ImageTensor b = wst_block(permute_rows(x, perm), permute_mask(m, perm), p);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(WstBlock, QueryWeightGradient) {
  Rng rng(39);
  nn::ParamSet p = live_block(4, 11);
  const ImageTensor x = rng.normal_tensor(4, 1, 4), m = random_mask(rng, 4, 3), r = rng.normal_tensor(4, 1, 4);
  auto loss = [&] { return dot(wst_block(x, m, p), r); };

  nn::ParamSet grads = p.zeros_like();
  nn::Graph g;
  const nn::Bound b(g, p, &grads);
  const nn::Var xv = g.constant(x);
  const nn::Var mv = g.constant(ImageTensor(1, 4, 4, std::vector<double>(m.values().begin(), m.values().end())));
  g.backward(prodehaze::testing::weighted_sum(g, wst_block(g, xv, mv, b, "", 4, 1, 4.0), r));
  for (const char* name : {"wq", "wk", "wv", "wo", "mlp_w1", "ln1_g"}) {
    for (std::size_t i = 0; i < p[name].size(); ++i) {
      const double fd = central_diff(p[name], i, loss);
      EXPECT_LT(rel_err(grads[name][i], fd, 1e-6), 1e-4) << name << "[" << i << "]";
    }
  }
}

TEST(WindowAttentionOp, GradientsAcrossWindows) {
  Rng rng(40);
  ImageTensor q = rng.normal_tensor(4, 4, 2), k = rng.normal_tensor(4, 4, 2), v = rng.normal_tensor(4, 4, 2);
  const ImageTensor pooled = rng.uniform_tensor(4, 4, 1);
  const auto w = default_mask_weights(4);
  const ImageTensor masks = build_window_masks(pooled, 2, 2, w, w, 4);
  const ImageTensor r = rng.normal_tensor(4, 4, 2);
  auto forward = [&](nn::Graph& g, ImageTensor* dq, ImageTensor* dk, ImageTensor* dv) {
    return nn::window_attention(g, g.parameter(q, dq), g.parameter(k, dk), g.parameter(v, dv), g.constant(masks), 2,
                                2, 4.0);
  };
  auto loss = [&] {
    nn::Graph g;
    return dot(g.value(forward(g, nullptr, nullptr, nullptr)), r);
  };
  ImageTensor dq(4, 4, 2), dk(4, 4, 2), dv(4, 4, 2);
  nn::Graph g;
  g.backward(prodehaze::testing::weighted_sum(g, forward(g, &dq, &dk, &dv), r));
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_LT(rel_err(dq[i], central_diff(q, i, loss), 1e-6), 1e-4);
    EXPECT_LT(rel_err(dk[i], central_diff(k, i, loss), 1e-6), 1e-4);
    EXPECT_LT(rel_err(dv[i], central_diff(v, i, loss), 1e-6), 1e-4);
  }

  // per window, the op agrees with the single-window kernel
  nn::Graph g2;
  const ImageTensor out = g2.value(forward(g2, nullptr, nullptr, nullptr));
  const WindowGrid gq = window_partition(q, 2, 2), gk = window_partition(k, 2, 2), gv = window_partition(v, 2, 2);
  WindowGrid go = gq;
  for (std::size_t i = 0; i < 4; ++i) {
    ImageTensor mi(4, 4, 1, std::vector<double>(masks.data() + 16 * i, masks.data() + 16 * (i + 1)));
    go.windows[i] = modulated_attention(gq.windows[i], gk.windows[i], gv.windows[i], mi, 4.0).output;
  }
  EXPECT_EQ(window_merge(go), out);
}

TEST(WindowMasksOp, GradientInWeights) {
  Rng rng(41);
  // small pooled values keep every product inside the unclamped range
  const ImageTensor pooled = rng.uniform_tensor(4, 4, 1, 0.1, 0.6);
  ImageTensor wq = rng.uniform_tensor(1, 1, 3, 0.3, 0.6), wk = rng.uniform_tensor(1, 1, 3, 0.3, 0.6);
  const ImageTensor r = rng.normal_tensor(4, 4, 4);
  auto finite_dot = [&](const ImageTensor& masks) {
    double s = 0;
    for (std::size_t i = 0; i < masks.size(); ++i)
      if (std::isfinite(masks[i])) s += masks[i] * r[i];
    return s;
  };
  auto loss = [&] { return finite_dot(build_window_masks(pooled, 2, 2, wq.values(), wk.values(), 3)); };
  ImageTensor dq(1, 1, 3), dk(1, 1, 3);
  nn::Graph g;
  const nn::Var masks = nn::window_masks(g, pooled, g.parameter(wq, &dq), g.parameter(wk, &dk), 2, 2, 3);
  ImageTensor rr = r;
  for (std::size_t i = 0; i < rr.size(); ++i)
    if (!std::isfinite(g.value(masks)[i])) rr[i] = 0.0;
  // -inf entries are constants; route the gradient through a finite copy
  ImageTensor finite = g.value(masks);
  for (double& x : finite.values())
    if (!std::isfinite(x)) x = 0.0;
  const nn::Var proxy = g.record(finite, {masks}, [masks](nn::Graph& gg, std::size_t self) {
    const ImageTensor up = gg.grad(self);
    ImageTensor& down = gg.grad(masks);
    for (std::size_t i = 0; i < up.size(); ++i) down[i] += up[i];
  });
  g.backward(prodehaze::testing::weighted_sum(g, proxy, rr));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LT(rel_err(dq[i], central_diff(wq, i, loss), 1e-6), 1e-4);
    EXPECT_LT(rel_err(dk[i], central_diff(wk, i, loss), 1e-6), 1e-4);
  }
}
