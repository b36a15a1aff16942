#include "prodehaze/pipeline/cli.hpp"

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "prodehaze/error.hpp"
#include "prodehaze/pipeline/commands.hpp"
#include "prodehaze/pipeline/config.hpp"
#include "prodehaze/pipeline/logging.hpp"
#include "prodehaze/tensor_io.hpp"

namespace prodehaze::pipeline {

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string input;
  std::string checkpoint_dir;
  std::string method = "dcp";
  std::string stage;
  bool teacher_forced = false;
  std::string pred, gt;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--seed", f.seed, "root seed (overrides the config)");
  cmd->add_option("--out", f.out, "output directory (overrides the config)");
  cmd->add_option("--input", f.input, "dataset root (overrides the config)");
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.input.empty()) cfg.dataset_root = f.input;
  if (!f.checkpoint_dir.empty()) cfg.checkpoint_dir = f.checkpoint_dir;
  if (f.teacher_forced) cfg.hcr.teacher_forced = true;
  return cfg;
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Desk-scale dehazing toolkit: haze synthesis, structural prompts, haze-aware masks, toy "
               "diffusion restoration and evaluation."};
  app.name("prodehaze");
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "write a seeded synthetic clean/hazy/meta dataset");
  auto* prompt = app.add_subcommand("prompt", "extract high-frequency structural prompts");
  auto* mask = app.add_subcommand("mask", "compute DCP masks and per-window sparse masks");
  auto* dehaze = app.add_subcommand("dehaze", "dehaze a directory of images");
  auto* train = app.add_subcommand("train-toy", "train the toy SPR or HCR stage");
  auto* eval = app.add_subcommand("eval", "PSNR / SSIM / CIEDE2000 report for a prediction directory");
  auto* ablate = app.add_subcommand("ablate", "four-way structural prompt / mask ablation");
  for (CLI::App* c : {synth, prompt, mask, dehaze, train, ablate}) add_common(c, f);
  for (CLI::App* c : {dehaze, train, ablate})
    c->add_option("--checkpoint-dir", f.checkpoint_dir, "directory holding spr.ckpt / hcr.ckpt");
  dehaze->add_option("--method", f.method, "dcp or prodehaze-toy")->check(CLI::IsMember({"dcp", "prodehaze-toy"}));
  train->add_option("--stage", f.stage, "spr or hcr")->required()->check(CLI::IsMember({"spr", "hcr"}));
  for (CLI::App* c : {train, ablate})
    c->add_flag("--teacher-forced", f.teacher_forced, "decode encoder latents of the clean image during HCR");
  eval->add_option("--pred", f.pred, "directory of predictions")->required();
  eval->add_option("--gt", f.gt, "directory of ground truth")->required();
  eval->add_option("--out", f.out, "report path; writes <out>.csv and <out>.json")->required();
  eval->add_option("--config", f.config, "JSON run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    init_logging();
    const RunConfig cfg = resolve(f);
    const nlohmann::json echo = to_json(cfg);
    std::cout << echo.dump(2) << std::endl;

    if (eval->parsed()) {
      const MetricReport r = cmd_eval(f.pred, f.gt, f.out);
      spdlog::info("eval: {} images, mean PSNR {:.4f} dB, SSIM {:.4f}, CIEDE2000 {:.4f}", r.rows.size(),
                   r.mean.psnr_db, r.mean.ssim, r.mean.ciede2000);
      return 0;
    }
    if (synth->parsed()) cmd_synth(cfg);
    else if (prompt->parsed()) cmd_prompt(cfg);
    else if (mask->parsed()) cmd_mask(cfg);
    else if (dehaze->parsed()) cmd_dehaze(cfg, f.method);
    else if (train->parsed()) cmd_train_toy(cfg, f.stage);
    else if (ablate->parsed()) {
      const AblationReport r = cmd_ablate(cfg);
      for (const AblationRow& row : r.rows)
        spdlog::info("ablate {}: PSNR {:.4f} SSIM {:.4f} CIEDE2000 {:.4f}", row.name, row.psnr_db, row.ssim,
                     row.ciede2000);
    }
    write_json_file(echo, std::filesystem::path(cfg.output_dir) / "run_config.json");
    return 0;
  } catch (const Error& e) {
    print_error(std::string(to_string(e.code())), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
}

}  // namespace prodehaze::pipeline
