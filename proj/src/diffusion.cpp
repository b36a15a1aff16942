#include "prodehaze/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "prodehaze/error.hpp"
#include "prodehaze/kernels/kernels.hpp"
#include "prodehaze/nn/ops.hpp"
#include "prodehaze/seed.hpp"
#include "prodehaze/structure_prompt.hpp"

namespace prodehaze {

NoiseSchedule make_schedule(std::size_t steps, double beta_min, double beta_max) {
  if (steps < 1 || !(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "make_schedule: need T >= 1 and 0 < beta_min <= beta_max < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  double prod = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double b = steps == 1 ? beta_min
                                : beta_min + (beta_max - beta_min) * static_cast<double>(i) / static_cast<double>(steps - 1);
    prod *= 1.0 - b;
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    s.alpha_bar.push_back(prod);
  }
  return s;
}

ImageTensor forward_diffuse(const ImageTensor& z0, std::size_t t, const ImageTensor& eps,
                            const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps) {
    fail(ErrorCode::kOutOfRange, "forward_diffuse: t = " + std::to_string(t) + " outside [1, " +
                                     std::to_string(schedule.steps) + "]");
  }
  require(z0.same_shape(eps), ErrorCode::kShapeMismatch, "forward_diffuse: eps shape differs from z0");
  const double a = std::sqrt(schedule.alpha_bar_at(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
  ImageTensor zt = z0;
  for (std::size_t i = 0; i < zt.size(); ++i) zt[i] = a * z0[i] + b * eps[i];
  return zt;
}

ImageTensor to_diffusion_space(const ImageTensor& latent) {
  ImageTensor z = latent;
  for (double& v : z.values()) v *= kDiffusionLatentScale;
  return z;
}

ImageTensor from_diffusion_space(const ImageTensor& z) {
  ImageTensor latent = z;
  for (double& v : latent.values()) v /= kDiffusionLatentScale;
  return latent;
}

NoiseDraw draw_noise(std::uint64_t seed, const ImageTensor& like, std::size_t steps) {
  Rng rng(seed);
  NoiseDraw d;
  d.t = 1 + static_cast<std::size_t>(rng.index(steps));
  d.eps = rng.normal_tensor(like.height(), like.width(), like.channels());
  return d;
}

double spr_loss(const EpsPredictor& denoiser, const ImageTensor& z0, const ImageTensor& cond,
                const NoiseSchedule& schedule, std::uint64_t seed) {
  const NoiseDraw d = draw_noise(seed, z0, schedule.steps);
  const ImageTensor pred = denoiser(forward_diffuse(z0, d.t, d.eps, schedule), d.t, cond);
  require(pred.same_shape(d.eps), ErrorCode::kShapeMismatch, "denoiser output shape differs from z");
  return kernels::active().sum_sq_diff(d.eps.data(), pred.data(), pred.size()) / static_cast<double>(pred.size());
}

ImageTensor sample(const EpsPredictor& denoiser, const ImageTensor& cond, const NoiseSchedule& schedule,
                   std::uint64_t seed, std::size_t latent_channels, double clip) {
  Rng rng(seed);
  ImageTensor z = rng.normal_tensor(cond.height(), cond.width(), latent_channels);
  for (std::size_t t = schedule.steps; t >= 1; --t) {
    const ImageTensor eps = denoiser(z, t, cond);
    require(eps.same_shape(z), ErrorCode::kShapeMismatch, "denoiser output shape differs from z");
    const double beta = schedule.beta_at(t);
    const double abar = schedule.alpha_bar_at(t);
    const double abar_prev = t > 1 ? schedule.alpha_bar_at(t - 1) : 1.0;
    if (clip > 0.0) {
      const double sa = std::sqrt(abar), sb = std::sqrt(1.0 - abar);
      const double c0 = std::sqrt(abar_prev) * beta / (1.0 - abar);
      const double ct = std::sqrt(schedule.alpha_at(t)) * (1.0 - abar_prev) / (1.0 - abar);
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double x0 = std::clamp((z[i] - sb * eps[i]) / sa, -clip, clip);
        z[i] = c0 * x0 + ct * z[i];
      }
    } else {
      const double coef = beta / std::sqrt(1.0 - abar);
      const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha_at(t));
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = (z[i] - coef * eps[i]) * inv_sqrt_alpha;
    }
    if (t > 1) {
      const double sigma = std::sqrt(beta * (1.0 - abar_prev) / (1.0 - abar));
      for (double& v : z.values()) v += sigma * rng.normal();
    }
  }
  return z;
}

SprModel make_spr_model(std::uint64_t seed, std::size_t latent_channels, std::size_t cond_channels,
                        std::size_t hidden) {
  SprModel m{latent_channels, cond_channels, hidden, {}};
  Rng rng(derive_seed(seed, "spr/init"));
  const std::size_t in = latent_channels + cond_channels + 1;
  auto conv = [&](const std::string& name, std::size_t cin, std::size_t cout, double gain) {
    m.params.add(name + "_w", rng.normal_tensor(9, cin, cout, gain / std::sqrt(9.0 * cin)));
    m.params.add(name + "_b", ImageTensor(1, 1, cout));
  };
  conv("den1", in, hidden, 1.0);
  conv("den2", hidden, hidden, 1.0);
  conv("den3", hidden, latent_channels, 0.1);
  const ImageTensor k = default_prompt_kernel(3);
  m.params.add("prompt_kernel", ImageTensor(1, 9, 3, std::vector<double>(k.values().begin(), k.values().end())));
  return m;
}

nn::Var denoiser_forward(nn::Graph& g, const nn::Bound& p, nn::Var z_t, nn::Var cond, std::size_t t,
                         std::size_t steps) {
  const ImageTensor& z = g.value(z_t);
  const nn::Var tchan = g.constant(ImageTensor(z.height(), z.width(), 1, static_cast<double>(t) / static_cast<double>(steps)));
  const nn::Var x = nn::concat(g, nn::concat(g, z_t, cond), tchan);
  nn::Var h = nn::silu(g, nn::conv2d(g, x, p["den1_w"], p["den1_b"]));
  h = nn::silu(g, nn::conv2d(g, h, p["den2_w"], p["den2_b"]));
  return nn::conv2d(g, h, p["den3_w"], p["den3_b"]);
}

EpsPredictor predictor(const SprModel& model, const NoiseSchedule& schedule) {
  return [&model, steps = schedule.steps](const ImageTensor& z_t, std::size_t t, const ImageTensor& cond) {
    nn::Graph g;
    const nn::Bound p(g, model.params, nullptr);
    return g.value(denoiser_forward(g, p, g.constant(z_t), g.constant(cond), t, steps));
  };
}

namespace {

nn::Var condition_var(nn::Graph& g, const nn::Bound& p, const ImageTensor& latent_in, const ImageTensor& bands) {
  const nn::Var lin = g.constant(latent_in);
  if (bands.empty()) {
    return nn::concat(g, lin, g.constant(ImageTensor(latent_in.height(), latent_in.width(), kLatentChannels)));
  }
  const nn::Var no_bias = g.constant(ImageTensor(1, 1, 3));
  const nn::Var x_high = nn::conv2d(g, g.constant(bands), p["prompt_kernel"], no_bias);
  const nn::Var high = nn::scale(g, nn::latent_encode(g, x_high, prompt_encoder()), kDiffusionLatentScale);
  return nn::concat(g, lin, high);
}

}  // namespace

ImageTensor spr_condition(const SprModel& model, const ImageTensor& latent_in, const ImageTensor& bands) {
  nn::Graph g;
  const nn::Bound p(g, model.params, nullptr);
  return g.value(condition_var(g, p, latent_in, bands));
}

SprSample make_spr_sample(const ImageTensor& hazy, const ImageTensor& clean, bool use_prompt) {
  return {to_diffusion_space(encode_latent(clean)), to_diffusion_space(encode_latent(hazy)),
          use_prompt ? high_freq_bands(hazy) : ImageTensor()};
}

double spr_batch_loss(const SprModel& model, const std::vector<SprSample>& data, const NoiseSchedule& schedule,
                      std::uint64_t seed, std::size_t step, nn::ParamSet* grads) {
  require(!data.empty(), ErrorCode::kEmptyDataset, "SPR training set is empty");
  const double inv_n = 1.0 / static_cast<double>(data.size());
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SprSample& s = data[i];
    const NoiseDraw d = draw_noise(derive_seed(seed, "spr/step/" + std::to_string(step), i), s.z0, schedule.steps);
    nn::Graph g;
    const nn::Bound p(g, model.params, grads);
    const nn::Var cond = condition_var(g, p, s.latent_in, s.bands);
    const nn::Var zt = g.constant(forward_diffuse(s.z0, d.t, d.eps, schedule));
    const nn::Var pred = denoiser_forward(g, p, zt, cond, d.t, schedule.steps);
    const nn::Var loss = nn::scale(g, nn::mean_sq_diff(g, pred, g.constant(d.eps)), inv_n);
    total += g.value(loss)[0];
    if (grads) g.backward(loss);
  }
  return total;
}

std::vector<double> train_spr(SprModel& model, const std::vector<SprSample>& data, const NoiseSchedule& schedule,
                              const TrainOptions& opts) {
  require(!data.empty(), ErrorCode::kEmptyDataset, "SPR training set is empty");
  std::vector<double> trace;
  trace.reserve(opts.steps);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    nn::ParamSet grads = model.params.zeros_like();
    trace.push_back(spr_batch_loss(model, data, schedule, opts.seed, step, &grads));
    nn::sgd_step(model.params, grads, opts.lr);
  }
  return trace;
}

double smoothed_head(const std::vector<double>& trace, std::size_t window) {
  const std::size_t n = std::min(window, trace.size());
  if (n == 0) return 0.0;
  return std::accumulate(trace.begin(), trace.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

double smoothed_tail(const std::vector<double>& trace, std::size_t window) {
  const std::size_t n = std::min(window, trace.size());
  if (n == 0) return 0.0;
  return std::accumulate(trace.end() - static_cast<std::ptrdiff_t>(n), trace.end(), 0.0) / static_cast<double>(n);
}

}  // namespace prodehaze
