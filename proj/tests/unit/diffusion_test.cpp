#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "prodehaze/diffusion.hpp"
#include "prodehaze/error.hpp"
#include "prodehaze/seed.hpp"
#include "prodehaze/structure_prompt.hpp"
#include "test_util.hpp"

using namespace prodehaze;
using prodehaze::testing::central_diff;
using prodehaze::testing::rel_err;

namespace {

std::vector<SprSample> small_set(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SprSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const ImageTensor clean = rng.uniform_tensor(16, 16, 3);
    ImageTensor hazy = clean;
    for (double& v : hazy.values()) v = 0.6 * v + 0.35;
    out.push_back(make_spr_sample(hazy, clean, true));
  }
  return out;
}

}  // namespace

TEST(Schedule, Examples) {
  const NoiseSchedule one = make_schedule(1, 0.5, 0.5);
  ASSERT_EQ(one.alpha_bar.size(), 1u);
  EXPECT_EQ(one.alpha_bar_at(1), 0.5);

  const NoiseSchedule two = make_schedule(2, 0.1, 0.2);
  EXPECT_NEAR(two.alpha_bar_at(1), 0.9, 1e-15);
  EXPECT_NEAR(two.alpha_bar_at(2), 0.72, 1e-15);

  for (const NoiseSchedule& s : {make_schedule(), make_schedule(50, 1e-4, 0.02)}) {
    ASSERT_EQ(s.steps, 50u);
    for (std::size_t t = 1; t <= s.steps; ++t) {
      EXPECT_GT(s.beta_at(t), 0.0);
      EXPECT_LT(s.beta_at(t), 1.0);
      EXPECT_EQ(s.alpha_at(t), 1.0 - s.beta_at(t));
      if (t > 1) EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
    }
  }
}

TEST(Schedule, InvalidRanges) {
  EXPECT_THROW(make_schedule(0, 0.1, 0.2), Error);
  EXPECT_THROW(make_schedule(10, 0.0, 0.2), Error);
  EXPECT_THROW(make_schedule(10, 0.3, 0.2), Error);
  EXPECT_THROW(make_schedule(10, 0.1, 1.0), Error);
}

TEST(ForwardDiffuse, Examples) {
  const NoiseSchedule s = make_schedule();
  Rng rng(60);
  const ImageTensor z0 = rng.normal_tensor(2, 2, 4), eps = rng.normal_tensor(2, 2, 4);
  const ImageTensor zero(2, 2, 4);
  const std::size_t t = 17;
  const ImageTensor a = forward_diffuse(z0, t, zero, s), b = forward_diffuse(zero, t, eps, s);
  for (std::size_t i = 0; i < z0.size(); ++i) {
    EXPECT_DOUBLE_EQ(a[i], std::sqrt(s.alpha_bar_at(t)) * z0[i]);
    EXPECT_DOUBLE_EQ(b[i], std::sqrt(1.0 - s.alpha_bar_at(t)) * eps[i]);
  }
  try {
    forward_diffuse(z0, 0, eps, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfRange);
  }
  EXPECT_THROW(forward_diffuse(z0, 51, eps, s), Error);
  EXPECT_THROW(forward_diffuse(z0, 1, ImageTensor(2, 2, 3), s), Error);
}

TEST(ForwardDiffuse, MarginalMomentsMonteCarlo) {
  const NoiseSchedule s = make_schedule();
  const std::size_t n = 100000;
  for (std::size_t t : {1u, 10u, 25u, 50u}) {
    Rng rng(derive_seed(61, "mc", t));
    const ImageTensor eps = rng.normal_tensor(n, 1, 1);
    const ImageTensor z0(n, 1, 1, 0.5);
    const ImageTensor zt = forward_diffuse(z0, t, eps, s);
    double mean = 0;
    for (double v : zt.values()) mean += v;
    mean /= n;
    double var = 0;
    for (double v : zt.values()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    const double target_var = 1.0 - s.alpha_bar_at(t);
    EXPECT_LE(std::abs(var - target_var), 3.0 * target_var * std::sqrt(2.0 / (n - 1))) << "t=" << t;
    EXPECT_LE(std::abs(mean - std::sqrt(s.alpha_bar_at(t)) * 0.5), 3.0 * std::sqrt(target_var / n)) << "t=" << t;
  }
}

TEST(DiffusionSpace, RoundTrip) {
  Rng rng(62);
  const ImageTensor l = rng.normal_tensor(2, 3, 4);
  const ImageTensor z = to_diffusion_space(l);
  EXPECT_DOUBLE_EQ(z[5], l[5] / 8.0);
  EXPECT_EQ(from_diffusion_space(z), l);
}

TEST(SprLoss, OracleIsExactlyZero) {
  const NoiseSchedule s = make_schedule();
  Rng rng(63);
  const ImageTensor z0 = rng.normal_tensor(4, 4, 4), cond(4, 4, 8);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const EpsPredictor oracle = [&](const ImageTensor&, std::size_t t, const ImageTensor&) {
      const NoiseDraw d = draw_noise(seed, z0, s.steps);
      EXPECT_EQ(t, d.t);
      return d.eps;
    };
    EXPECT_EQ(spr_loss(oracle, z0, cond, s, seed), 0.0);
  }
}

TEST(SprLoss, ZeroPredictorHasUnitLoss) {
  const NoiseSchedule s = make_schedule();
  const ImageTensor z0(16, 16, 4), cond(16, 16, 8);
  const EpsPredictor zero = [](const ImageTensor& z, std::size_t, const ImageTensor&) {
    return ImageTensor(z.height(), z.width(), z.channels());
  };
  const std::size_t draws = 200;
  double mean = 0;
  for (std::uint64_t seed = 0; seed < draws; ++seed) mean += spr_loss(zero, z0, cond, s, derive_seed(64, "zero", seed));
  mean /= draws;
  // each loss averages numel squared unit normals (variance 2 each)
  EXPECT_LE(std::abs(mean - 1.0), 3.0 * std::sqrt(2.0 / (draws * z0.size())));
  EXPECT_EQ(spr_loss(zero, z0, cond, s, 5), spr_loss(zero, z0, cond, s, 5));
}

TEST(Sampler, SingleStepInvertsWithOracle) {
  const NoiseSchedule s = make_schedule(1, 0.3, 0.3);
  Rng rng(65);
  const ImageTensor z0 = rng.uniform_tensor(3, 3, 4, -0.9, 0.9), cond(3, 3, 8);
  const EpsPredictor oracle = [&](const ImageTensor& z1, std::size_t, const ImageTensor&) {
    ImageTensor eps = z1;
    const double abar = s.alpha_bar_at(1);
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = (z1[i] - std::sqrt(abar) * z0[i]) / std::sqrt(1.0 - abar);
    return eps;
  };
  for (double clip : {kSampleClip, 0.0}) {
    const ImageTensor out = sample(oracle, cond, s, 66, 4, clip);
    ASSERT_TRUE(out.same_shape(z0));
    for (std::size_t i = 0; i < z0.size(); ++i) EXPECT_NEAR(out[i], z0[i], 1e-12);
  }
}

TEST(Sampler, ShapeAndDeterminism) {
  const NoiseSchedule s = make_schedule();
  const SprModel m = make_spr_model(3);
  const ImageTensor cond(2, 3, 8, 0.1);
  const ImageTensor a = sample(predictor(m, s), cond, s, 9, 4);
  EXPECT_EQ(a.height(), 2u);
  EXPECT_EQ(a.width(), 3u);
  EXPECT_EQ(a.channels(), 4u);
  EXPECT_EQ(a, sample(predictor(m, s), cond, s, 9, 4));
  EXPECT_NE(a, sample(predictor(m, s), cond, s, 10, 4));
}

TEST(Sampler, ConstantLatentMean) {
  const NoiseSchedule s = make_schedule();
  const double c = 0.3;
  std::vector<SprSample> data(4, SprSample{ImageTensor(4, 4, 4, c), ImageTensor(4, 4, 4), ImageTensor()});
  SprModel m = make_spr_model(67);
  train_spr(m, data, s, {2000, 0.2, 68});
  const ImageTensor cond = spr_condition(m, ImageTensor(4, 4, 4), ImageTensor());
  double mean = 0;
  const std::size_t draws = 64;
  for (std::size_t k = 0; k < draws; ++k) {
    const ImageTensor z = sample(predictor(m, s), cond, s, derive_seed(69, "draw", k), 4);
    for (double v : z.values()) mean += v / (draws * z.size());
  }
  EXPECT_NEAR(mean, c, 0.2);
}

TEST(TrainSpr, GradientMatchesFiniteDifferences) {
  const NoiseSchedule s = make_schedule();
  const auto data = small_set(3, 70);
  SprModel m = make_spr_model(71);
  // make the last layer non-trivial so every slice entry carries gradient
  Rng rng(72);
  for (double& v : m.params["den3_w"].values()) v += 0.05 * rng.normal();

  nn::ParamSet grads = m.params.zeros_like();
  spr_batch_loss(m, data, s, 73, 4, &grads);
  auto loss = [&] { return spr_batch_loss(m, data, s, 73, 4, nullptr); };

  // 100-parameter slice spread over every tensor
  std::size_t checked = 0;
  const std::size_t per = 100 / m.params.size() + 1;
  for (auto& [name, t] : m.params) {
    for (std::size_t j = 0; j < per && checked < 100; ++j, ++checked) {
      const std::size_t i = (j * 7919) % t.size();
      const double fd = central_diff(t, i, loss);
      EXPECT_LT(rel_err(grads[name][i], fd, 1e-6), 1e-4) << name << "[" << i << "]";
    }
  }
  EXPECT_EQ(checked, 100u);
}

TEST(TrainSpr, ZeroLearningRate) {
  const NoiseSchedule s = make_schedule();
  const auto data = small_set(2, 74);
  SprModel m = make_spr_model(75);
  const nn::ParamSet before = m.params;
  const auto trace = train_spr(m, data, s, {5, 0.0, 76});
  EXPECT_EQ(m.params, before);
  // nothing moves: each entry is the fixed model's loss under that step's draws
  for (std::size_t k = 0; k < trace.size(); ++k) EXPECT_EQ(trace[k], spr_batch_loss(m, data, s, 76, k, nullptr));
}

TEST(TrainSpr, DeterministicAndValidated) {
  const NoiseSchedule s = make_schedule();
  const auto data = small_set(2, 77);
  SprModel a = make_spr_model(78), b = make_spr_model(78);
  EXPECT_EQ(train_spr(a, data, s, {6, 0.05, 79}), train_spr(b, data, s, {6, 0.05, 79}));
  EXPECT_EQ(a.params, b.params);
  try {
    train_spr(a, {}, s, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyDataset);
  }
}

TEST(TrainSpr, SmoothedWindows) {
  const std::vector<double> t{4, 2, 9, 9, 1, 3};
  EXPECT_DOUBLE_EQ(smoothed_head(t, 2), 3.0);
  EXPECT_DOUBLE_EQ(smoothed_tail(t, 2), 2.0);
  EXPECT_DOUBLE_EQ(smoothed_head(t, 20), 28.0 / 6.0);
}
