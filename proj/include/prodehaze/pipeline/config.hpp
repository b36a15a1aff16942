#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "prodehaze/diffusion.hpp"
#include "prodehaze/haze_mask.hpp"
#include "prodehaze/haze_synthesis.hpp"

namespace prodehaze::pipeline {

// Every knob of a run. Serialises to one nested JSON document; parsing
// rejects unknown keys at every level, and missing keys keep their defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string dataset_root = "data";
  std::string output_dir = "out";
  std::string checkpoint_dir;  // empty: output_dir

  struct Synth {
    std::size_t count = 20;
    std::size_t height = 64;
    std::size_t width = 64;
    HazeRanges haze;
  } synth;

  struct Mask {
    double k_fraction = kDefaultKFraction;
    std::size_t dcp_patch = 3;  // toy resolutions; the library default is 15
    std::size_t window = 4;
  } mask;

  struct Dcp {
    double omega = 0.95;
    double t_min = 0.1;
  } dcp;

  struct Schedule {
    std::size_t steps = kDefaultSteps;
    double beta_min = kDefaultBetaMin;
    double beta_max = kDefaultBetaMax;
  } schedule;

  struct Spr {
    std::size_t steps = 200;
    double lr = 0.05;
    bool use_prompt = true;
  } spr;

  struct Hcr {
    std::size_t steps = 200;
    double lr = 0.002;
    std::string optimizer = "adam";  // adam | momentum
    double momentum = 0.9;
    double lambda_p = 0.1;
    bool teacher_forced = false;
    bool use_wst = true;
    bool use_mask = true;
  } hcr;

  struct Ablation {
    double eval_fraction = 0.25;  // trailing share of the dataset held out for scoring
  } ablation;

  std::filesystem::path checkpoints() const {
    return checkpoint_dir.empty() ? std::filesystem::path(output_dir) : std::filesystem::path(checkpoint_dir);
  }
  NoiseSchedule noise_schedule() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Throws kConfig on unknown keys, wrong types or invalid values.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace prodehaze::pipeline
