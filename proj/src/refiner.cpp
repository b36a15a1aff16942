#include "prodehaze/refiner.hpp"

#include <cmath>
#include <string>

#include "prodehaze/error.hpp"
#include "prodehaze/haze_mask.hpp"
#include "prodehaze/nn/ops.hpp"
#include "prodehaze/seed.hpp"
#include "prodehaze/structure_prompt.hpp"
#include "prodehaze/window_attention.hpp"

namespace prodehaze {

namespace {

std::string stage_name(std::size_t scale) { return std::to_string(scale); }

// [1,2,1] x [1,2,1] / 16 on every channel's diagonal.
ImageTensor binomial_conv(std::size_t dim) {
  static constexpr double k1[3] = {0.25, 0.5, 0.25};
  ImageTensor w(9, dim, dim);
  for (std::size_t ky = 0; ky < 3; ++ky)
    for (std::size_t kx = 0; kx < 3; ++kx)
      for (std::size_t c = 0; c < dim; ++c) w.at(ky * 3 + kx, c, c) = k1[ky] * k1[kx];
  return w;
}

}  // namespace

RefinerModel make_refiner(std::uint64_t seed, const RefinerConfig& config) {
  require(config.dim >= 3, ErrorCode::kInvalidArgument, "refiner width must be at least 3");
  RefinerModel m{config, {}};
  const std::size_t d = config.dim;
  Rng rng(derive_seed(seed, "refiner/init"));

  ImageTensor in_w(1, kLatentChannels, d);
  for (std::size_t c = 0; c < 3; ++c) in_w.at(0, c, c) = 1.0 / static_cast<double>(kImageStride);
  for (std::size_t j = 3; j < d; ++j)
    for (std::size_t c = 0; c < kLatentChannels; ++c) in_w.at(0, c, j) = 0.1 * rng.normal();
  m.params.add("dec_in_w", in_w);
  m.params.add("dec_in_b", ImageTensor(1, 1, d));
  for (std::size_t i = 1; i <= 3; ++i) {
    m.params.add("dec_up" + std::to_string(i) + "_w", binomial_conv(d));
    m.params.add("dec_up" + std::to_string(i) + "_b", ImageTensor(1, 1, d));
  }
  ImageTensor out_w(1, d, 3);
  for (std::size_t c = 0; c < 3; ++c) out_w.at(0, c, c) = 1.0;
  m.params.add("dec_out_w", out_w);
  m.params.add("dec_out_b", ImageTensor(1, 1, 3));

  const std::size_t n = config.window * config.window;
  for (std::size_t s : {8, 4}) {
    add_wst_params(m.params, "wst" + stage_name(s) + "/", d, derive_seed(seed, "refiner/wst", s));
    const std::vector<double> w0 = default_mask_weights(n);
    m.params.add("mask" + stage_name(s) + "/wq", ImageTensor(1, 1, n, w0));
    m.params.add("mask" + stage_name(s) + "/wk", ImageTensor(1, 1, n, w0));
  }
  const std::size_t rin = 3 + d;
  for (std::size_t s : kRefinerStages) {
    const std::string pre = "r" + stage_name(s) + "/";
    m.params.add(pre + "w1", rng.normal_tensor(1, rin, config.r_hidden, 1.0 / std::sqrt(static_cast<double>(rin))));
    m.params.add(pre + "b1", ImageTensor(1, 1, config.r_hidden));
    m.params.add(pre + "w2", ImageTensor(1, config.r_hidden, d));
    m.params.add(pre + "b2", ImageTensor(1, 1, d));
  }
  return m;
}

nn::Var refine_features(nn::Graph& g, nn::Var f_enc, nn::Var f_dec, const nn::Bound& p, const std::string& prefix) {
  const ImageTensor& e = g.value(f_enc);
  const ImageTensor& d = g.value(f_dec);
  require(e.height() == d.height() && e.width() == d.width(), ErrorCode::kShapeMismatch,
          "refine_features: encoder and decoder features differ in size");
  const nn::Var h = nn::gelu(g, nn::conv2d(g, nn::concat(g, f_enc, f_dec), p[prefix + "w1"], p[prefix + "b1"]));
  return nn::add(g, f_dec, nn::conv2d(g, h, p[prefix + "w2"], p[prefix + "b2"]));
}

ImageTensor refine_features(const ImageTensor& f_enc, const ImageTensor& f_dec, const nn::ParamSet& params,
                            const std::string& prefix) {
  nn::Graph g;
  const nn::Bound p(g, params, nullptr);
  return g.value(refine_features(g, g.constant(f_enc), g.constant(f_dec), p, prefix));
}

std::vector<ImageTensor> encoder_features(const ImageTensor& x_in) {
  std::vector<ImageTensor> out;
  for (std::size_t s : kRefinerStages) out.push_back(avg_pool(x_in, s));
  return out;
}

namespace {

nn::Var stage_masks(nn::Graph& g, const nn::Bound& p, const RefinerConfig& cfg, const ImageTensor& dcp_mask,
                    std::size_t scale) {
  const ImageTensor pooled = avg_pool(dcp_mask, scale);
  const std::size_t win = cfg.window;
  if (pooled.height() % win != 0 || pooled.width() % win != 0) {
    fail(ErrorCode::kShapeMismatch, "mask resolution " + std::to_string(pooled.height()) + "x" +
                                        std::to_string(pooled.width()) + " not divisible by window " +
                                        std::to_string(win));
  }
  const std::size_t n = win * win;
  if (!cfg.use_mask) {
    const std::size_t windows = (pooled.height() / win) * (pooled.width() / win);
    return g.constant(ImageTensor(windows, n, n, 1.0));
  }
  const std::string pre = "mask" + stage_name(scale) + "/";
  return nn::window_masks(g, pooled, p[pre + "wq"], p[pre + "wk"], win, win, default_topk(n, cfg.k_fraction));
}

nn::Var stage_wst(nn::Graph& g, const nn::Bound& p, const RefinerConfig& cfg, nn::Var h, const ImageTensor& dcp_mask,
                  std::size_t scale) {
  const nn::Var masks = stage_masks(g, p, cfg, dcp_mask, scale);
  const double n = static_cast<double>(cfg.window * cfg.window);
  return wst_block(g, h, masks, p, "wst" + stage_name(scale) + "/", cfg.window, cfg.window, n);
}

nn::Var upsample_stage(nn::Graph& g, const nn::Bound& p, nn::Var h, std::size_t i) {
  const std::string pre = "dec_up" + std::to_string(i);
  return nn::conv2d(g, nn::upsample2(g, h), p[pre + "_w"], p[pre + "_b"], nn::Padding::kReplicate);
}

}  // namespace

nn::Var decode(nn::Graph& g, const nn::Bound& p, const RefinerConfig& cfg, const ImageTensor& z0,
               const std::vector<ImageTensor>& enc_features, const ImageTensor& dcp_mask) {
  require(enc_features.size() == std::size(kRefinerStages), ErrorCode::kShapeMismatch,
          "decode: expected one encoder feature per stage");
  const ImageTensor& full = enc_features.back();
  require(z0.height() * kImageStride == full.height() && z0.width() * kImageStride == full.width(),
          ErrorCode::kShapeMismatch, "decode: latent and input image sizes disagree");
  require(dcp_mask.height() == full.height() && dcp_mask.width() == full.width() && dcp_mask.channels() == 1,
          ErrorCode::kShapeMismatch, "decode: DCP mask must be H x W x 1");

  nn::Var h = nn::conv2d(g, g.constant(z0), p["dec_in_w"], p["dec_in_b"]);
  for (std::size_t i = 0; i < std::size(kRefinerStages); ++i) {
    const std::size_t s = kRefinerStages[i];
    if (i > 0) h = upsample_stage(g, p, h, i);
    if (cfg.use_wst && s >= 4) h = stage_wst(g, p, cfg, h, dcp_mask, s);
    h = refine_features(g, g.constant(enc_features[i]), h, p, "r" + stage_name(s) + "/");
  }
  return nn::clamp01(g, nn::conv2d(g, h, p["dec_out_w"], p["dec_out_b"]));
}

ImageTensor decode(const RefinerModel& model, const ImageTensor& z0, const ImageTensor& x_in) {
  nn::Graph g;
  const nn::Bound p(g, model.params, nullptr);
  const ImageTensor dcp = dark_channel(x_in, model.config.dcp_patch).values;
  return g.value(decode(g, p, model.config, z0, encoder_features(x_in), dcp));
}

ImageTensor decode_plain(const RefinerModel& model, const ImageTensor& z0) {
  nn::Graph g;
  const nn::Bound p(g, model.params, nullptr);
  nn::Var h = nn::conv2d(g, g.constant(z0), p["dec_in_w"], p["dec_in_b"]);
  for (std::size_t i = 1; i < std::size(kRefinerStages); ++i) h = upsample_stage(g, p, h, i);
  return g.value(nn::clamp01(g, nn::conv2d(g, h, p["dec_out_w"], p["dec_out_b"])));
}

FeatureBank make_feature_bank(std::uint64_t seed, std::size_t width) {
  Rng rng(derive_seed(seed, "hcr/feature-bank"));
  FeatureBank b;
  b.w1 = rng.normal_tensor(9, 3, width, 1.0 / std::sqrt(27.0));
  b.b1 = rng.normal_tensor(1, 1, width, 0.1);
  b.w2 = rng.normal_tensor(9, width, width, 1.0 / std::sqrt(9.0 * static_cast<double>(width)));
  b.b2 = ImageTensor(1, 1, width);
  return b;
}

nn::Var bank_features(nn::Graph& g, nn::Var x, const FeatureBank& bank) {
  const nn::Var h = nn::gelu(g, nn::conv2d(g, x, g.constant(bank.w1), g.constant(bank.b1)));
  return nn::conv2d(g, h, g.constant(bank.w2), g.constant(bank.b2));
}

ImageTensor bank_features(const ImageTensor& x, const FeatureBank& bank) {
  nn::Graph g;
  return g.value(bank_features(g, g.constant(x), bank));
}

namespace {

struct LossVars {
  nn::Var l1, perceptual, total;
};

LossVars hcr_loss_vars(nn::Graph& g, nn::Var x_r, const ImageTensor& x_gt, const FeatureBank& bank, double lambda_p) {
  require(g.value(x_r).same_shape(x_gt), ErrorCode::kShapeMismatch, "hcr_loss: x_r and x_gt shapes differ");
  const nn::Var gt = g.constant(x_gt);
  const nn::Var l1 = nn::mean_abs_diff(g, x_r, gt);
  const nn::Var perc = nn::mean_sq_diff(g, bank_features(g, x_r, bank), g.constant(bank_features(x_gt, bank)));
  return {l1, perc, nn::add(g, l1, nn::scale(g, perc, lambda_p))};
}

}  // namespace

HcrLoss hcr_loss(const ImageTensor& x_r, const ImageTensor& x_gt, const FeatureBank& bank, double lambda_p) {
  nn::Graph g;
  const LossVars v = hcr_loss_vars(g, g.constant(x_r), x_gt, bank, lambda_p);
  return {g.value(v.l1)[0], g.value(v.perceptual)[0], g.value(v.total)[0]};
}

std::vector<HcrSample> make_hcr_samples(const std::vector<ImageTensor>& hazy, const std::vector<ImageTensor>& clean,
                                        const SprModel* spr, const NoiseSchedule& schedule, bool use_prompt,
                                        bool teacher_forced, std::uint64_t seed) {
  require(hazy.size() == clean.size(), ErrorCode::kShapeMismatch, "hazy and clean sets differ in size");
  require(teacher_forced || spr != nullptr, ErrorCode::kMissingCheckpoint,
          "sampler-driven HCR needs a trained SPR model");
  std::vector<HcrSample> out;
  for (std::size_t i = 0; i < hazy.size(); ++i) {
    HcrSample s{hazy[i], clean[i], {}};
    if (teacher_forced) {
      s.z0 = encode_latent(clean[i]);
    } else {
      const ImageTensor cond = spr_condition(*spr, to_diffusion_space(encode_latent(hazy[i])),
                                             use_prompt ? high_freq_bands(hazy[i]) : ImageTensor());
      s.z0 = from_diffusion_space(
          sample(predictor(*spr, schedule), cond, schedule, derive_seed(seed, "hcr/sample", i), kLatentChannels));
    }
    out.push_back(std::move(s));
  }
  return out;
}

double hcr_batch_loss(const RefinerModel& model, const std::vector<HcrSample>& data, const FeatureBank& bank,
                      double lambda_p, nn::ParamSet* grads) {
  require(!data.empty(), ErrorCode::kEmptyDataset, "HCR training set is empty");
  const double inv_n = 1.0 / static_cast<double>(data.size());
  double total = 0.0;
  for (const HcrSample& s : data) {
    nn::Graph g;
    const nn::Bound p(g, model.params, grads);
    const ImageTensor dcp = dark_channel(s.x_in, model.config.dcp_patch).values;
    const nn::Var x_r = decode(g, p, model.config, s.z0, encoder_features(s.x_in), dcp);
    const nn::Var loss = nn::scale(g, hcr_loss_vars(g, x_r, s.x_gt, bank, lambda_p).total, inv_n);
    total += g.value(loss)[0];
    if (grads) g.backward(loss);
  }
  return total;
}

std::vector<double> train_hcr(RefinerModel& model, const std::vector<HcrSample>& data, const HcrTrainOptions& opts) {
  require(!data.empty(), ErrorCode::kEmptyDataset, "HCR training set is empty");
  const FeatureBank bank = make_feature_bank(opts.seed);
  nn::ParamSet velocity = model.params.zeros_like();
  nn::AdamState adam = nn::adam_state(model.params);
  std::vector<double> trace;
  trace.reserve(opts.steps);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    nn::ParamSet grads = model.params.zeros_like();
    trace.push_back(hcr_batch_loss(model, data, bank, opts.lambda_p, &grads));
    if (opts.optimizer == Optimizer::kAdam) {
      nn::adam_step(model.params, grads, adam, opts.lr);
      continue;
    }
    for (auto& [name, v] : velocity) {
      const ImageTensor& gr = grads[name];
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = opts.momentum * v[i] + gr[i];
    }
    nn::sgd_step(model.params, velocity, opts.lr);
  }
  return trace;
}

}  // namespace prodehaze
