#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "prodehaze/image_tensor.hpp"
#include "prodehaze/nn/graph.hpp"
#include "prodehaze/nn/params.hpp"

namespace prodehaze {

// Linear-beta DDPM tables; entry t-1 holds step t (t = 1..T).
struct NoiseSchedule {
  std::size_t steps = 0;
  std::vector<double> beta, alpha, alpha_bar;

  double beta_at(std::size_t t) const { return beta.at(t - 1); }
  double alpha_at(std::size_t t) const { return alpha.at(t - 1); }
  double alpha_bar_at(std::size_t t) const { return alpha_bar.at(t - 1); }
};

inline constexpr std::size_t kDefaultSteps = 50;
inline constexpr double kDefaultBetaMin = 2e-3;
inline constexpr double kDefaultBetaMax = 0.4;

NoiseSchedule make_schedule(std::size_t steps = kDefaultSteps, double beta_min = kDefaultBetaMin,
                            double beta_max = kDefaultBetaMax);

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
ImageTensor forward_diffuse(const ImageTensor& z0, std::size_t t, const ImageTensor& eps,
                            const NoiseSchedule& schedule);

// Diffusion operates on encoder latents scaled into roughly unit range.
inline constexpr double kDiffusionLatentScale = 1.0 / 8.0;
ImageTensor to_diffusion_space(const ImageTensor& latent);
ImageTensor from_diffusion_space(const ImageTensor& z);

// eps-prediction interface: (z_t, t, c_f) -> eps_hat with z_t's shape.
using EpsPredictor = std::function<ImageTensor(const ImageTensor& z_t, std::size_t t, const ImageTensor& cond)>;

// The (t, eps) pair a loss evaluation draws from `seed`.
struct NoiseDraw {
  std::size_t t = 1;
  ImageTensor eps;
};
NoiseDraw draw_noise(std::uint64_t seed, const ImageTensor& like, std::size_t steps);

// ||eps - eps_hat(z_t, t, c_f)||^2 / numel with (t, eps) = draw_noise(seed).
double spr_loss(const EpsPredictor& denoiser, const ImageTensor& z0, const ImageTensor& cond,
                const NoiseSchedule& schedule, std::uint64_t seed);

// Diffusion-space latents lie in [0, 1] on the colour channels and near 0
// on the last one, so the sampler clips its x0 estimate to [-1, 1].
inline constexpr double kSampleClip = 1.0;

// Ancestral DDPM sampling from z_T ~ N(0, I) through the posterior
// q(z_{t-1} | z_t, x0_hat) with x0_hat = (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
// clipped to [-clip, clip] (clip <= 0 disables clipping, which reduces to the
// plain eps-form update). Variance beta~_t = beta_t (1 - abar_{t-1}) / (1 - abar_t);
// no noise on the final step.
ImageTensor sample(const EpsPredictor& denoiser, const ImageTensor& cond, const NoiseSchedule& schedule,
                   std::uint64_t seed, std::size_t latent_channels, double clip = kSampleClip);

// Conditional toy denoiser: three 3x3 convolutions (hidden width 16, SiLU)
// over concat(z_t, c_f, t/T). The same parameter set also holds the
// structural-prompt fusion kernel ("prompt_kernel", 1 x 3C x C), trained
// jointly in the SPR stage.
struct SprModel {
  std::size_t latent_channels = 4;
  std::size_t cond_channels = 8;
  std::size_t hidden = 16;
  nn::ParamSet params;
};

SprModel make_spr_model(std::uint64_t seed, std::size_t latent_channels = 4, std::size_t cond_channels = 8,
                        std::size_t hidden = 16);

nn::Var denoiser_forward(nn::Graph& g, const nn::Bound& p, nn::Var z_t, nn::Var cond, std::size_t t,
                         std::size_t steps);

// Wraps a model as an EpsPredictor (no gradients).
EpsPredictor predictor(const SprModel& model, const NoiseSchedule& schedule);

// One SPR training example. `bands` is the (H/2) x (W/2) x 9 LH/HH/HL stack of
// the hazy input; when empty, the prompt half of c_f is zero.
struct SprSample {
  ImageTensor z0;         // diffusion-space latent of the clean image
  ImageTensor latent_in;  // diffusion-space latent of the hazy input
  ImageTensor bands;
};

// Diffusion-space condition c_f built with the model's prompt kernel (zeros
// for the prompt half when bands are empty).
ImageTensor spr_condition(const SprModel& model, const ImageTensor& latent_in, const ImageTensor& bands);

SprSample make_spr_sample(const ImageTensor& hazy, const ImageTensor& clean, bool use_prompt);

struct TrainOptions {
  std::size_t steps = 200;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

// Mean SPR loss over the batch with the draws of `step`, gradients added into `grads`.
double spr_batch_loss(const SprModel& model, const std::vector<SprSample>& data, const NoiseSchedule& schedule,
                      std::uint64_t seed, std::size_t step, nn::ParamSet* grads);

// Full-batch gradient descent; returns the per-step loss trace.
std::vector<double> train_spr(SprModel& model, const std::vector<SprSample>& data, const NoiseSchedule& schedule,
                              const TrainOptions& opts);

// Mean of the first / last `window` entries of a loss trace.
double smoothed_head(const std::vector<double>& trace, std::size_t window = 20);
double smoothed_tail(const std::vector<double>& trace, std::size_t window = 20);

}  // namespace prodehaze
