#include "prodehaze/pipeline/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <spdlog/spdlog.h>

#include "prodehaze/error.hpp"
#include "prodehaze/haze_mask.hpp"
#include "prodehaze/image_io.hpp"
#include "prodehaze/pipeline/scenes.hpp"
#include "prodehaze/seed.hpp"
#include "prodehaze/structure_prompt.hpp"
#include "prodehaze/tensor_io.hpp"

namespace prodehaze::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorCode::kUnwritablePath, "cannot create directory " + dir.string());
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kUnwritablePath, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu.png", i);
  return buf;
}

RefinerConfig refiner_config(const RunConfig& cfg) {
  RefinerConfig r;
  r.window = cfg.mask.window;
  r.k_fraction = cfg.mask.k_fraction;
  r.dcp_patch = cfg.mask.dcp_patch;
  r.use_wst = cfg.hcr.use_wst;
  r.use_mask = cfg.hcr.use_mask;
  return r;
}

HcrTrainOptions hcr_options(const RunConfig& cfg) {
  HcrTrainOptions o;
  o.steps = cfg.hcr.steps;
  o.lr = cfg.hcr.lr;
  o.optimizer = cfg.hcr.optimizer == "momentum" ? Optimizer::kMomentum : Optimizer::kAdam;
  o.momentum = cfg.hcr.momentum;
  o.lambda_p = cfg.hcr.lambda_p;
  o.seed = derive_seed(cfg.seed, "hcr/train");
  return o;
}

json schedule_json(const NoiseSchedule& s) {
  return {{"steps", s.steps}, {"beta_min", s.beta.front()}, {"beta_max", s.beta.back()}};
}

json trace_summary(const std::vector<double>& trace) {
  const double head = smoothed_head(trace), tail = smoothed_tail(trace);
  return {{"steps", trace.size()},
          {"initial_smoothed", head},
          {"final_smoothed", tail},
          {"ratio", head > 0.0 ? tail / head : 0.0},
          {"trace", trace}};
}

}  // namespace

std::vector<SceneRecord> synthesize_dataset(const RunConfig& cfg) {
  std::vector<SceneRecord> out;
  for (std::size_t i = 0; i < cfg.synth.count; ++i) {
    SceneRecord r;
    r.name = scene_name(i);
    r.clean = make_scene(derive_seed(cfg.seed, "synth/scene", i), cfg.synth.height, cfg.synth.width);
    r.params = sample_haze_params(derive_seed(cfg.seed, "synth/params", i), cfg.synth.haze);
    r.hazy = quantize8(synthesize_hazy(r.clean, r.params));
    out.push_back(std::move(r));
  }
  return out;
}

Dataset load_dataset(const fs::path& root) {
  const fs::path clean_dir = root / "clean", hazy_dir = root / "hazy";
  if (!fs::is_directory(clean_dir) || !fs::is_directory(hazy_dir)) {
    fail(ErrorCode::kMissingFile, "dataset " + root.string() + " needs clean/ and hazy/ subdirectories");
  }
  std::map<std::string, fs::path> hazy;
  for (const auto& p : list_images(hazy_dir)) hazy[p.filename().string()] = p;
  Dataset d;
  for (const auto& p : list_images(clean_dir)) {
    const std::string name = p.filename().string();
    auto it = hazy.find(name);
    if (it == hazy.end()) {
      spdlog::warn("no hazy counterpart for {}", name);
      continue;
    }
    d.names.push_back(name);
    d.clean.push_back(load_image(p));
    d.hazy.push_back(load_image(it->second));
  }
  if (d.names.empty()) fail(ErrorCode::kEmptyDataset, "no clean/hazy pairs under " + root.string());
  return d;
}

std::vector<fs::path> hazy_inputs(const fs::path& root) {
  const fs::path sub = root / "hazy";
  auto files = list_images(fs::is_directory(sub) ? sub : root);
  if (files.empty()) fail(ErrorCode::kEmptyDataset, "no input images under " + root.string());
  return files;
}

void cmd_synth(const RunConfig& cfg) {
  const fs::path out = cfg.output_dir;
  for (const char* sub : {"clean", "hazy", "meta"}) make_dir(out / sub);
  for (const SceneRecord& r : synthesize_dataset(cfg)) {
    save_image(r.clean, out / "clean" / r.name);
    save_image(r.hazy, out / "hazy" / r.name);
    write_json_file(to_json(r.params), out / "meta" / fs::path(r.name).replace_extension(".json"));
  }
  spdlog::info("synth: wrote {} triples to {}", cfg.synth.count, out.string());
}

void cmd_prompt(const RunConfig& cfg) {
  const fs::path out = fs::path(cfg.output_dir) / "prompt";
  make_dir(out);
  const ImageTensor kernel = default_prompt_kernel(3);
  for (const fs::path& in : hazy_inputs(cfg.dataset_root)) {
    const StructuralPrompt p = extract_high_freq_prompt(load_image(in), kernel);
    const std::string stem = in.stem().string();
    save_image(normalize_for_display(p.x_high), out / (stem + ".png"));
    write_tensor_sidecar(p.x_high, out / stem, {{"source", in.filename().string()}, {"bands", "LH,HH,HL"}});
  }
}

void cmd_mask(const RunConfig& cfg) {
  const fs::path out = fs::path(cfg.output_dir) / "mask";
  make_dir(out);
  const std::size_t win = cfg.mask.window, n = win * win;
  const std::vector<double> w0 = default_mask_weights(n);
  const std::size_t k = default_topk(n, cfg.mask.k_fraction);
  for (const fs::path& in : hazy_inputs(cfg.dataset_root)) {
    const DcpMask dcp = dark_channel(load_image(in), cfg.mask.dcp_patch);
    const std::string stem = in.stem().string();
    save_image(dcp.values, out / (stem + "_dcp.png"));
    for (std::size_t s : {8, 4}) {
      const ImageTensor pooled = avg_pool(dcp.values, s);
      const ImageTensor ms = build_window_masks(pooled, win, win, w0, w0, k);
      write_tensor_sidecar(ms, out / (stem + "_ms" + std::to_string(s)),
                           {{"source", in.filename().string()}, {"scale", s}, {"window", win}, {"k", k},
                            {"layout", "windows x N x N"}});
    }
  }
}

Checkpoint spr_checkpoint(const SprModel& m, const NoiseSchedule& schedule, bool use_prompt, std::uint64_t seed) {
  Checkpoint c;
  c.meta = {{"kind", "spr"},
            {"seed", seed},
            {"schedule", schedule_json(schedule)},
            {"use_prompt", use_prompt},
            {"latent_channels", m.latent_channels},
            {"cond_channels", m.cond_channels},
            {"hidden", m.hidden}};
  c.params = m.params;
  return c;
}

Checkpoint hcr_checkpoint(const RefinerModel& m, bool teacher_forced, std::uint64_t seed) {
  const RefinerConfig& r = m.config;
  Checkpoint c;
  c.meta = {{"kind", "hcr"},
            {"seed", seed},
            {"teacher_forced", teacher_forced},
            {"refiner", {{"dim", r.dim}, {"r_hidden", r.r_hidden}, {"window", r.window},
                         {"k_fraction", r.k_fraction}, {"dcp_patch", r.dcp_patch},
                         {"use_wst", r.use_wst}, {"use_mask", r.use_mask}}}};
  c.params = m.params;
  return c;
}

LoadedSpr spr_from_checkpoint(const Checkpoint& c) {
  try {
    if (c.meta.at("kind") != "spr") fail(ErrorCode::kCorruptHeader, "checkpoint is not an SPR checkpoint");
    const json& s = c.meta.at("schedule");
    LoadedSpr out;
    out.model = {c.meta.at("latent_channels").get<std::size_t>(), c.meta.at("cond_channels").get<std::size_t>(),
                 c.meta.at("hidden").get<std::size_t>(), c.params};
    out.schedule = make_schedule(s.at("steps").get<std::size_t>(), s.at("beta_min").get<double>(),
                                 s.at("beta_max").get<double>());
    out.use_prompt = c.meta.at("use_prompt").get<bool>();
    return out;
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorruptHeader, std::string("SPR checkpoint metadata: ") + e.what());
  }
}

RefinerModel refiner_from_checkpoint(const Checkpoint& c) {
  try {
    if (c.meta.at("kind") != "hcr") fail(ErrorCode::kCorruptHeader, "checkpoint is not an HCR checkpoint");
    const json& r = c.meta.at("refiner");
    RefinerModel m;
    m.config.dim = r.at("dim").get<std::size_t>();
    m.config.r_hidden = r.at("r_hidden").get<std::size_t>();
    m.config.window = r.at("window").get<std::size_t>();
    m.config.k_fraction = r.at("k_fraction").get<double>();
    m.config.dcp_patch = r.at("dcp_patch").get<std::size_t>();
    m.config.use_wst = r.at("use_wst").get<bool>();
    m.config.use_mask = r.at("use_mask").get<bool>();
    m.params = c.params;
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorruptHeader, std::string("HCR checkpoint metadata: ") + e.what());
  }
}

ImageTensor dehaze_toy(const LoadedSpr& spr, const RefinerModel& refiner, const ImageTensor& hazy,
                       std::uint64_t sample_seed) {
  const std::vector<HcrSample> s =
      make_hcr_samples({hazy}, {hazy}, &spr.model, spr.schedule, spr.use_prompt, false, sample_seed);
  return decode(refiner, s.front().z0, hazy);
}

void cmd_dehaze(const RunConfig& cfg, const std::string& method) {
  if (method != "dcp" && method != "prodehaze-toy") {
    fail(ErrorCode::kInvalidArgument, "unknown method '" + method + "' (expected dcp or prodehaze-toy)");
  }
  LoadedSpr spr;
  RefinerModel refiner;
  if (method == "prodehaze-toy") {
    spr = spr_from_checkpoint(load_checkpoint(cfg.checkpoints() / "spr.ckpt"));
    refiner = refiner_from_checkpoint(load_checkpoint(cfg.checkpoints() / "hcr.ckpt"));
  }
  const std::vector<fs::path> inputs = hazy_inputs(cfg.dataset_root);
  const fs::path out = fs::path(cfg.output_dir) / "dehazed";
  make_dir(out);
  const DcpBaselineOptions dcp{cfg.mask.dcp_patch, cfg.dcp.omega, cfg.dcp.t_min};
  json timing = json::array();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ImageTensor hazy = load_image(inputs[i]);
    const auto t0 = std::chrono::steady_clock::now();
    const ImageTensor result = method == "dcp" ? dcp_dehaze_baseline(hazy, dcp)
                                               : dehaze_toy(spr, refiner, hazy, derive_seed(cfg.seed, "dehaze/sample", i));
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const std::string name = inputs[i].filename().string();
    save_image(result, out / name);
    timing.push_back({{"name", name}, {"ms", ms}});
    spdlog::debug("dehaze {}: {:.2f} ms", name, ms);
  }
  write_json_file({{"method", method}, {"images", timing}}, fs::path(cfg.output_dir) / "timing.json");
  spdlog::info("dehaze: {} images with {}", inputs.size(), method);
}

json cmd_train_toy(const RunConfig& cfg, const std::string& stage) {
  const fs::path out = cfg.output_dir;
  make_dir(out);
  const Dataset data = load_dataset(cfg.dataset_root);
  json summary;
  if (stage == "spr") {
    const NoiseSchedule schedule = cfg.noise_schedule();
    std::vector<SprSample> samples;
    for (std::size_t i = 0; i < data.names.size(); ++i)
      samples.push_back(make_spr_sample(data.hazy[i], data.clean[i], cfg.spr.use_prompt));
    SprModel model = make_spr_model(derive_seed(cfg.seed, "spr"));
    const auto trace = train_spr(model, samples, schedule,
                                 {cfg.spr.steps, cfg.spr.lr, derive_seed(cfg.seed, "spr/train")});
    save_checkpoint(spr_checkpoint(model, schedule, cfg.spr.use_prompt, cfg.seed), out / "spr.ckpt");
    summary = trace_summary(trace);
  } else if (stage == "hcr") {
    LoadedSpr spr;
    if (!cfg.hcr.teacher_forced) spr = spr_from_checkpoint(load_checkpoint(cfg.checkpoints() / "spr.ckpt"));
    const auto samples = make_hcr_samples(data.hazy, data.clean, cfg.hcr.teacher_forced ? nullptr : &spr.model,
                                          spr.schedule, spr.use_prompt, cfg.hcr.teacher_forced,
                                          derive_seed(cfg.seed, "hcr/latents"));
    RefinerModel model = make_refiner(derive_seed(cfg.seed, "hcr"), refiner_config(cfg));
    const auto trace = train_hcr(model, samples, hcr_options(cfg));
    save_checkpoint(hcr_checkpoint(model, cfg.hcr.teacher_forced, cfg.seed), out / "hcr.ckpt");
    summary = trace_summary(trace);
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown stage '" + stage + "' (expected spr or hcr)");
  }
  summary["stage"] = stage;
  write_json_file(summary, out / (stage + "_trace.json"));
  spdlog::info("train-toy {}: smoothed loss {:.6g} -> {:.6g}", stage, summary["initial_smoothed"].get<double>(),
               summary["final_smoothed"].get<double>());
  return summary;
}

MetricReport cmd_eval(const fs::path& pred, const fs::path& gt, const fs::path& out) {
  MetricReport report = evaluate_dataset(pred, gt);
  fs::path base = out;
  if (base.extension() == ".csv" || base.extension() == ".json") base.replace_extension();
  if (base.has_parent_path()) make_dir(base.parent_path());
  write_text(to_csv(report), fs::path(base.string() + ".csv"));
  write_json_file(to_json(report), fs::path(base.string() + ".json"));
  if (report.warnings > 0) spdlog::warn("eval: {} warning(s); unmatched: {}", report.warnings, report.unmatched.size());
  return report;
}

json to_json(const AblationReport& r) {
  json rows = json::array();
  for (const AblationRow& row : r.rows) {
    rows.push_back({{"config", row.name}, {"prompt", row.prompt}, {"mask", row.mask}, {"psnr_db", row.psnr_db},
                    {"ssim", row.ssim}, {"ciede2000", row.ciede2000}});
  }
  return {{"rows", rows}, {"train_count", r.train_count}, {"eval_count", r.eval_count}};
}

AblationReport cmd_ablate(const RunConfig& cfg) {
  const fs::path out = cfg.output_dir;
  make_dir(out);
  const Dataset data = load_dataset(cfg.dataset_root);
  const std::size_t n = data.names.size();
  const auto n_eval = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.ablation.eval_fraction * n)));
  if (n_eval >= n) fail(ErrorCode::kEmptyDataset, "ablate: dataset too small to hold out an evaluation split");
  const std::size_t n_train = n - n_eval;
  const std::vector<ImageTensor> train_hazy(data.hazy.begin(), data.hazy.begin() + n_train);
  const std::vector<ImageTensor> train_clean(data.clean.begin(), data.clean.begin() + n_train);
  const NoiseSchedule schedule = cfg.noise_schedule();

  AblationReport report{{}, n_train, n_eval};
  for (bool prompt : {true, false}) {
    std::vector<SprSample> spr_data;
    for (std::size_t i = 0; i < n_train; ++i) spr_data.push_back(make_spr_sample(train_hazy[i], train_clean[i], prompt));
    LoadedSpr spr{make_spr_model(derive_seed(cfg.seed, "spr")), schedule, prompt};
    const auto spr_trace = train_spr(spr.model, spr_data, schedule,
                                     {cfg.spr.steps, cfg.spr.lr, derive_seed(cfg.seed, "spr/train")});
    spdlog::info("ablate: SPR {} prompt, smoothed loss ratio {:.4f}", prompt ? "with" : "without",
                 smoothed_tail(spr_trace) / smoothed_head(spr_trace));
    const auto hcr_data = make_hcr_samples(train_hazy, train_clean, &spr.model, schedule, prompt,
                                           cfg.hcr.teacher_forced, derive_seed(cfg.seed, "hcr/latents"));
    for (bool mask : {true, false}) {
      RunConfig variant = cfg;
      variant.hcr.use_mask = mask;
      RefinerModel refiner = make_refiner(derive_seed(cfg.seed, "hcr"), refiner_config(variant));
      const auto hcr_trace = train_hcr(refiner, hcr_data, hcr_options(cfg));
      spdlog::info("ablate: HCR {} M_s, smoothed loss ratio {:.4f}", mask ? "with" : "without",
                   smoothed_tail(hcr_trace) / smoothed_head(hcr_trace));
      std::vector<MetricRow> rows;
      for (std::size_t i = n_train; i < n; ++i) {
        const ImageTensor x = dehaze_toy(spr, refiner, data.hazy[i], derive_seed(cfg.seed, "ablate/eval", i));
        rows.push_back(evaluate_pair(data.names[i], x, data.clean[i]));
      }
      const MetricReport m = make_report(std::move(rows));
      const std::string name = std::string(prompt ? "+prompt" : "-prompt") + (mask ? "+M_s" : "-M_s");
      report.rows.push_back({name, prompt, mask, m.mean.psnr_db, m.mean.ssim, m.mean.ciede2000});
    }
  }
  write_json_file(to_json(report), out / "ablation.json");
  std::string csv = "config,psnr_db,ssim,ciede2000\n";
  char buf[256];
  for (const AblationRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%.10g\n", r.psnr_db, r.ssim, r.ciede2000);
    csv += r.name + buf;
  }
  write_text(csv, out / "ablation.csv");
  return report;
}

}  // namespace prodehaze::pipeline
