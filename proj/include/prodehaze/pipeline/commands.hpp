#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "prodehaze/checkpoint.hpp"
#include "prodehaze/diffusion.hpp"
#include "prodehaze/haze_synthesis.hpp"
#include "prodehaze/metrics.hpp"
#include "prodehaze/pipeline/config.hpp"
#include "prodehaze/refiner.hpp"

namespace prodehaze::pipeline {

struct SceneRecord {
  std::string name;  // "0000.png", ...
  ImageTensor clean, hazy;
  HazeParams params;
};

// The synthetic set described by cfg.synth, in memory (8-bit quantised, so it
// matches what cmd_synth writes).
std::vector<SceneRecord> synthesize_dataset(const RunConfig& cfg);

struct Dataset {
  std::vector<std::string> names;
  std::vector<ImageTensor> clean, hazy;
};

// Reads <root>/clean and <root>/hazy, paired by filename.
Dataset load_dataset(const std::filesystem::path& root);

// Hazy inputs: <root>/hazy when present, else image files directly in <root>.
std::vector<std::filesystem::path> hazy_inputs(const std::filesystem::path& root);

// Writes <out>/clean, <out>/hazy, <out>/meta.
void cmd_synth(const RunConfig& cfg);

// <out>/prompt/<stem>.png (display-normalised x_high) plus the raw sidecar.
void cmd_prompt(const RunConfig& cfg);

// <out>/mask/<stem>_dcp.png and <stem>_ms8 / <stem>_ms4 sidecars (per-window
// M_s at the two deepest refiner stages).
void cmd_mask(const RunConfig& cfg);

// method: "dcp" or "prodehaze-toy". Writes <out>/dehazed/<name> and
// <out>/timing.json (wall-clock, so not reproducible by design).
void cmd_dehaze(const RunConfig& cfg, const std::string& method);

// stage: "spr" or "hcr". Writes <out>/<stage>.ckpt and <out>/<stage>_trace.json
// and returns the summary stored in the trace file.
nlohmann::json cmd_train_toy(const RunConfig& cfg, const std::string& stage);

// Writes <base>.csv and <base>.json; a trailing .csv/.json on `out` is dropped.
MetricReport cmd_eval(const std::filesystem::path& pred, const std::filesystem::path& gt,
                      const std::filesystem::path& out);

struct AblationRow {
  std::string name;  // "+prompt+M_s", ...
  bool prompt = true, mask = true;
  double psnr_db = 0.0, ssim = 0.0, ciede2000 = 0.0;
};
struct AblationReport {
  std::vector<AblationRow> rows;
  std::size_t train_count = 0, eval_count = 0;
};
nlohmann::json to_json(const AblationReport& r);

// Four configurations {+/- structural prompt} x {+/- M_s}, paired seeds.
// Writes <out>/ablation.json and <out>/ablation.csv.
AblationReport cmd_ablate(const RunConfig& cfg);

// Model (de)serialisation shared by train-toy, dehaze and ablate.
Checkpoint spr_checkpoint(const SprModel& m, const NoiseSchedule& schedule, bool use_prompt, std::uint64_t seed);
Checkpoint hcr_checkpoint(const RefinerModel& m, bool teacher_forced, std::uint64_t seed);
struct LoadedSpr {
  SprModel model;
  NoiseSchedule schedule;
  bool use_prompt = true;
};
LoadedSpr spr_from_checkpoint(const Checkpoint& c);
RefinerModel refiner_from_checkpoint(const Checkpoint& c);

// One hazy image through the full toy pipeline: SPR sampling then decode.
ImageTensor dehaze_toy(const LoadedSpr& spr, const RefinerModel& refiner, const ImageTensor& hazy,
                       std::uint64_t sample_seed);

}  // namespace prodehaze::pipeline
