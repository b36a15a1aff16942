#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "prodehaze/error.hpp"
#include "prodehaze/haze_mask.hpp"
#include "prodehaze/haze_synthesis.hpp"
#include "prodehaze/metrics.hpp"
#include "prodehaze/seed.hpp"

using namespace prodehaze;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Double min with clamped (edge-replicated) neighbourhood indices.
ImageTensor brute_dark(const ImageTensor& img, std::size_t patch) {
  const long r = static_cast<long>(patch / 2);
  const long h = static_cast<long>(img.height()), w = static_cast<long>(img.width());
  ImageTensor out(img.height(), img.width(), 1);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double m = kInf;
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
          const long yy = std::clamp(y + dy, 0L, h - 1), xx = std::clamp(x + dx, 0L, w - 1);
          for (std::size_t c = 0; c < 3; ++c) m = std::min(m, img.at(yy, xx, c));
        }
      out.at(y, x, 0) = m;
    }
  return out;
}

}  // namespace

TEST(DarkChannel, WhiteAndRed) {
  for (double v : dark_channel(ImageTensor(5, 5, 3, 1.0), 3).values.values()) EXPECT_EQ(v, 1.0);
  ImageTensor red(5, 5, 3);
  for (std::size_t p = 0; p < 25; ++p) red[3 * p] = 1.0;
  for (double v : dark_channel(red, 3).values.values()) EXPECT_EQ(v, 0.0);
}

TEST(DarkChannel, MatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t h = 1 + rng.index(8), w = 1 + rng.index(8);
    const std::size_t patch = 1 + 2 * rng.index(4);
    const ImageTensor img = rng.uniform_tensor(h, w, 3);
    EXPECT_EQ(dark_channel(img, patch).values, brute_dark(img, patch)) << h << "x" << w << " patch " << patch;
  }
}

TEST(DarkChannel, HazedBlackImage) {
  // J = 0, A = 1: every channel equals 1 - t, so the dark channel is the patch
  // minimum of 1 - t, i.e. 1 - (patch maximum of t).
  const ImageTensor depth = generate_depth(DepthKind::kLinearRamp, 6, 6, 0);
  const ImageTensor t = synthesize_transmission(depth, 1.3);
  const ImageTensor hazy = apply_asm(ImageTensor(6, 6, 3), t, {1, 1, 1});
  const ImageTensor d = dark_channel(hazy, 3).values;
  EXPECT_EQ(d, brute_dark(hazy, 3));
  for (long y = 0; y < 6; ++y)
    for (long x = 0; x < 6; ++x) {
      double tmax = 0;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx)
          tmax = std::max(tmax, t.at(std::clamp(y + dy, 0L, 5L), std::clamp(x + dx, 0L, 5L), 0));
      EXPECT_NEAR(d.at(y, x, 0), 1.0 - tmax, 1e-15);
    }
}

TEST(DarkChannel, HazeNeverDecreasesIt) {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageTensor j = rng.uniform_tensor(8, 8, 3, 0.0, 0.7);
    const ImageTensor hazy = apply_asm(j, rng.uniform_tensor(8, 8, 1, 0.05, 1.0), {0.8, 0.9, 0.75});
    const ImageTensor a = dark_channel(j, 3).values, b = dark_channel(hazy, 3).values;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_GE(b[i], a[i]);
  }
}

TEST(DarkChannel, Preconditions) {
  EXPECT_THROW(dark_channel(ImageTensor(4, 4, 3), 4), Error);
  EXPECT_THROW(dark_channel(ImageTensor(4, 4, 1), 3), Error);
}

TEST(AtmosphericLight, Examples) {
  const ImageTensor grey(10, 10, 3, 0.8);
  const Rgb a = estimate_atmospheric_light(grey, dark_channel(grey, 3));
  for (double v : a) EXPECT_DOUBLE_EQ(v, 0.8);

  ImageTensor one(9, 9, 3);
  for (std::size_t c = 0; c < 3; ++c) one.at(4, 4, c) = 1.0;
  const Rgb b = estimate_atmospheric_light(one, dark_channel(one, 1));
  for (double v : b) EXPECT_EQ(v, 1.0);
}

TEST(AtmosphericLight, RecoveredFromSyntheticHaze) {
  const ImageTensor j(32, 32, 3, 0.02);
  const ImageTensor t = synthesize_transmission(generate_depth(DepthKind::kRadial, 32, 32, 0), 3.0);
  const ImageTensor hazy = apply_asm(j, t, {0.9, 0.9, 0.9});
  const Rgb a = estimate_atmospheric_light(hazy, dark_channel(hazy, 3));
  for (double v : a) EXPECT_NEAR(v, 0.9, 0.05);
}

TEST(DcpBaseline, Examples) {
  ImageTensor clean(8, 8, 3);
  Rng rng(23);
  for (std::size_t p = 0; p < 64; ++p) {
    clean[3 * p] = rng.uniform();
    clean[3 * p + 1] = rng.uniform();
  }
  const ImageTensor same = dcp_dehaze_baseline(clean, {3, 0.95, 0.1});
  ASSERT_TRUE(same.same_shape(clean));
  for (std::size_t i = 0; i < clean.size(); ++i) EXPECT_NEAR(same[i], clean[i], 1e-12);

  const ImageTensor flat(8, 8, 3, 0.85);
  for (double v : dcp_dehaze_baseline(flat, {3, 0.95, 0.1}).values()) EXPECT_NEAR(v, 0.85, 1e-12);
}

TEST(DcpBaseline, ImprovesMostSyntheticPairs) {
  int better = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(derive_seed(99, "clean", s));
    ImageTensor clean(32, 32, 3);
    for (std::size_t p = 0; p < 32 * 32; ++p) {
      const std::size_t zero = rng.index(3);
      for (std::size_t c = 0; c < 3; ++c) clean[3 * p + c] = c == zero ? 0.0 : rng.uniform(0.2, 1.0);
    }
    HazeRanges r;
    const ImageTensor hazy = synthesize_hazy(clean, sample_haze_params(derive_seed(99, "haze", s), r));
    const ImageTensor out = dcp_dehaze_baseline(hazy, {3, 0.95, 0.1});
    if (psnr(out, clean) > psnr(hazy, clean)) ++better;
  }
  EXPECT_GE(better, 18);
}

TEST(Correlation, Examples) {
  const std::vector<double> m{0.2, 0.8}, one{1.0};
  const ImageTensor c = correlation_map(m, one, one);
  EXPECT_NEAR(c.at(0, 0, 0), 0.04, 1e-15);
  EXPECT_NEAR(c.at(0, 1, 0), 0.16, 1e-15);
  EXPECT_NEAR(c.at(1, 0, 0), 0.16, 1e-15);
  EXPECT_NEAR(c.at(1, 1, 0), 0.64, 1e-15);

  const std::vector<double> zero{0.0};
  for (double v : correlation_map(m, zero, one).values()) EXPECT_EQ(v, 0.0);

  const std::vector<double> ones{1, 1}, two{2.0};
  for (double v : correlation_map_unclamped(ones, two, two).values()) EXPECT_EQ(v, 4.0);
  for (double v : correlation_map(ones, two, two).values()) EXPECT_EQ(v, 1.0);

  EXPECT_THROW(correlation_map(m, std::vector<double>{1, 2}, one), Error);
}

TEST(TopK, Examples) {
  const ImageTensor c(2, 2, 1, {0.04, 0.16, 0.16, 0.64});
  EXPECT_EQ(topk_indices(c, 1), (std::vector<IndexPair>{{1, 1}}));
  EXPECT_TRUE(topk_indices(c, 0).empty());
  EXPECT_EQ(topk_indices(ImageTensor(2, 2, 1, 0.5), 2), (std::vector<IndexPair>{{0, 0}, {0, 1}}));
  // the 0.16 tie resolves to (0, 1) before (1, 0)
  EXPECT_EQ(topk_indices(c, 2), (std::vector<IndexPair>{{1, 1}, {0, 1}}));
  EXPECT_THROW(topk_indices(c, 5), Error);
}

TEST(SparseMask, Examples) {
  const ImageTensor c(2, 2, 1, {0.04, 0.16, 0.16, 0.64});
  const std::vector<IndexPair> sel{{1, 1}};
  const ImageTensor m = build_sparse_mask(c, sel);
  EXPECT_DOUBLE_EQ(m[0], 0.96);
  EXPECT_DOUBLE_EQ(m[1], 0.84);
  EXPECT_DOUBLE_EQ(m[2], 0.84);
  EXPECT_EQ(m[3], -kInf);

  for (double v : build_sparse_mask(ImageTensor(2, 2, 1), {}).values()) EXPECT_EQ(v, 1.0);
  const std::vector<IndexPair> all{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (double v : build_sparse_mask(c, all).values()) EXPECT_EQ(v, -kInf);
}

TEST(SparseMask, RandomAlgebra) {
  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(9), nl = 1 + rng.index(5);
    std::vector<double> m(n), wq(nl), wk(nl);
    for (double& v : m) v = rng.uniform();
    for (double& v : wq) v = rng.uniform(-1, 1);
    wk = wq;
    const std::size_t k = rng.index(n * n + 1);
    const ImageTensor corr = correlation_map(m, wq, wk);
    const ImageTensor ms = build_sparse_mask(corr, topk_indices(corr, k));
    std::size_t neg = 0;
    for (double v : ms.values()) {
      if (v == -kInf) ++neg;
      else EXPECT_TRUE(v >= 0.0 && v <= 1.0);
    }
    EXPECT_EQ(neg, k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(corr.at(i, j, 0), corr.at(j, i, 0));
  }
}

TEST(SparseMask, Defaults) {
  EXPECT_EQ(default_topk(16), 64u);
  EXPECT_EQ(default_topk(3), 3u);  // ceil(2.25)
  EXPECT_EQ(default_topk(4, 1.0), 16u);
  for (double v : default_mask_weights(16)) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(WindowMasks, MatchesPerWindowPipeline) {
  Rng rng(25);
  const ImageTensor pooled = rng.uniform_tensor(4, 6, 1);
  const auto w = default_mask_weights(4);
  const ImageTensor all = build_window_masks(pooled, 2, 2, w, w, 5);
  ASSERT_EQ(all.height(), 6u);
  for (std::size_t wy = 0; wy < 2; ++wy)
    for (std::size_t wx = 0; wx < 3; ++wx) {
      std::vector<double> m{pooled.at(2 * wy, 2 * wx, 0), pooled.at(2 * wy, 2 * wx + 1, 0),
                            pooled.at(2 * wy + 1, 2 * wx, 0), pooled.at(2 * wy + 1, 2 * wx + 1, 0)};
      const ImageTensor ms =
          build_sparse_mask(correlation_map(m, w, w), topk_indices(correlation_map_unclamped(m, w, w), 5));
      for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(all[(wy * 3 + wx) * 16 + i], ms[i]);
    }
  EXPECT_THROW(build_window_masks(pooled, 3, 4, w, w, 1), Error);
}

TEST(WindowMasks, SelectionInvariantToPositiveScaling) {
  Rng rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const ImageTensor pooled = rng.uniform_tensor(4, 4, 1);
    std::vector<double> wq(4), wk(4);
    for (double& v : wq) v = rng.uniform(0.1, 1.0);
    for (double& v : wk) v = rng.uniform(0.1, 1.0);
    std::vector<double> scaled = wq;
    const double c = rng.uniform(0.01, 50.0);
    for (double& v : scaled) v *= c;
    const std::size_t k = 1 + rng.index(16);
    const ImageTensor a = build_window_masks(pooled, 4, 4, wq, wk, k);
    const ImageTensor b = build_window_masks(pooled, 4, 4, scaled, wk, k);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i] == -kInf, b[i] == -kInf);
  }
}

TEST(WindowMasks, SaturatedEntriesRankedByStrength) {
  // Every product exceeds 1 after scaling, so the clamped map is flat; the
  // selection must still pick the strongest pair.
  const ImageTensor pooled(1, 2, 1, {0.5, 0.9});
  const std::vector<double> wq{10.0}, wk{1.0};
  const ImageTensor ms = build_window_masks(pooled, 1, 2, wq, wk, 1);
  EXPECT_EQ(ms[3], -kInf);
  EXPECT_EQ(ms[0], 0.0);
}
