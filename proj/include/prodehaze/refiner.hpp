#pragma once

#include <cstdint>
#include <vector>

#include "prodehaze/diffusion.hpp"
#include "prodehaze/image_tensor.hpp"
#include "prodehaze/nn/graph.hpp"
#include "prodehaze/nn/params.hpp"

namespace prodehaze {

// Toy decoder layout (latent at H/8):
//   dec_in 1x1 (4 -> D) | WST @ H/8 | R @ H/8
//   up x2 + 3x3         | WST @ H/4 | R @ H/4
//   up x2 + 3x3         |           | R @ H/2
//   up x2 + 3x3         |           | R @ H
//   dec_out 1x1 (D -> 3), clamp to [0,1]
// Channels 0..2 of every decoder feature start as the colour path; the
// remaining channels are free hidden features.
struct RefinerConfig {
  std::size_t dim = 8;         // decoder feature width D
  std::size_t r_hidden = 8;    // hidden width of each refine network
  std::size_t window = 4;      // window side, in tokens
  double k_fraction = 0.25;
  std::size_t dcp_patch = 15;
  bool use_wst = true;
  bool use_mask = true;        // false: all-ones M_s
};

struct RefinerModel {
  RefinerConfig config;
  nn::ParamSet params;
};

RefinerModel make_refiner(std::uint64_t seed, const RefinerConfig& config = {});

// Stage scales, deepest first.
inline constexpr std::size_t kRefinerStages[] = {8, 4, 2, 1};

// F_RN = f_dec + R(concat(f_enc, f_dec)) with R = 1x1 -> GELU -> 1x1 and the
// weights stored under `prefix` (w1, b1, w2, b2).
nn::Var refine_features(nn::Graph& g, nn::Var f_enc, nn::Var f_dec, const nn::Bound& p, const std::string& prefix);
ImageTensor refine_features(const ImageTensor& f_enc, const ImageTensor& f_dec, const nn::ParamSet& params,
                            const std::string& prefix);

// Encoder skip features: avg_pool(x_in, s) for every stage scale.
std::vector<ImageTensor> encoder_features(const ImageTensor& x_in);

// Full decode; `dcp_mask` is the H x W x 1 dark channel of x_in.
nn::Var decode(nn::Graph& g, const nn::Bound& p, const RefinerConfig& cfg, const ImageTensor& z0,
               const std::vector<ImageTensor>& enc_features, const ImageTensor& dcp_mask);
ImageTensor decode(const RefinerModel& model, const ImageTensor& z0, const ImageTensor& x_in);

// The toy autoencoder path alone: no WST blocks, no refine networks.
ImageTensor decode_plain(const RefinerModel& model, const ImageTensor& z0);

// Fixed seeded 2-layer 3x3 conv feature bank standing in for a perceptual network.
struct FeatureBank {
  ImageTensor w1, b1, w2, b2;
};
FeatureBank make_feature_bank(std::uint64_t seed, std::size_t width = 8);
nn::Var bank_features(nn::Graph& g, nn::Var x, const FeatureBank& bank);
ImageTensor bank_features(const ImageTensor& x, const FeatureBank& bank);

inline constexpr double kDefaultPerceptualWeight = 0.1;

struct HcrLoss {
  double l1 = 0.0, perceptual = 0.0, total = 0.0;
};
HcrLoss hcr_loss(const ImageTensor& x_r, const ImageTensor& x_gt, const FeatureBank& bank,
                 double lambda_p = kDefaultPerceptualWeight);

struct HcrSample {
  ImageTensor x_in, x_gt;
  ImageTensor z0;  // raw encoder-space latent fed to the decoder
};

// z0 = encode_latent(x_gt) when teacher forced, otherwise sampled from the
// SPR model conditioned on x_in (seed derived per sample index).
std::vector<HcrSample> make_hcr_samples(const std::vector<ImageTensor>& hazy, const std::vector<ImageTensor>& clean,
                                        const SprModel* spr, const NoiseSchedule& schedule, bool use_prompt,
                                        bool teacher_forced, std::uint64_t seed);

enum class Optimizer { kAdam, kMomentum };

struct HcrTrainOptions {
  std::size_t steps = 200;
  double lr = 0.002;
  Optimizer optimizer = Optimizer::kAdam;
  double momentum = 0.9;  // kMomentum only
  double lambda_p = kDefaultPerceptualWeight;
  std::uint64_t seed = 0;
};

// Mean total loss over the batch; gradients added into `grads` when given.
double hcr_batch_loss(const RefinerModel& model, const std::vector<HcrSample>& data, const FeatureBank& bank,
                      double lambda_p, nn::ParamSet* grads);

// Full-batch first-order descent (Adam or heavy-ball momentum); returns the loss trace.
std::vector<double> train_hcr(RefinerModel& model, const std::vector<HcrSample>& data, const HcrTrainOptions& opts);

}  // namespace prodehaze
