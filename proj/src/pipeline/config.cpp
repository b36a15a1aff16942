#include "prodehaze/pipeline/config.hpp"

#include <set>

#include "prodehaze/error.hpp"
#include "prodehaze/tensor_io.hpp"

namespace prodehaze::pipeline {

using nlohmann::json;

NoiseSchedule RunConfig::noise_schedule() const {
  return make_schedule(schedule.steps, schedule.beta_min, schedule.beta_max);
}

namespace {

json rgb_json(const Rgb& c) { return json::array({c[0], c[1], c[2]}); }

json ranges_json(const HazeRanges& r) {
  json kinds = json::array();
  for (DepthKind k : r.depth_kinds) kinds.push_back(std::string(to_string(k)));
  return {{"light_min", rgb_json(r.light_min)},
          {"light_max", rgb_json(r.light_max)},
          {"beta_min", r.beta_min},
          {"beta_max", r.beta_max},
          {"depth_kinds", kinds}};
}

// Walks one JSON object, rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorCode::kConfig, "config: " + where() + " must be an object");
    for (const auto& [k, v] : j_.items()) pending_.insert(k);
  }
  void finish() const {
    if (!pending_.empty()) fail(ErrorCode::kConfig, "config: unknown key '" + *pending_.begin() + "' in " + where());
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!take(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorCode::kConfig, "config: wrong type for " + child(key));
    }
  }

  void get_rgb(const char* key, Rgb& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) fail(ErrorCode::kConfig, "config: " + child(key) + " must be [r, g, b]");
    for (std::size_t i = 0; i < 3; ++i) {
      if (!v[i].is_number()) fail(ErrorCode::kConfig, "config: " + child(key) + " must be numeric");
      out[i] = v[i].get<double>();
    }
  }

  const json* object(const char* key) { return take(key) ? &j_.at(key) : nullptr; }
  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  bool take(const char* key) {
    if (!j_.contains(key)) return false;
    pending_.erase(key);
    return true;
  }
  std::string where() const { return path_.empty() ? "top level" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> pending_;
};

void check(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorCode::kConfig, "config: " + msg);
}

}  // namespace

json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"dataset_root", c.dataset_root},
          {"output_dir", c.output_dir},
          {"checkpoint_dir", c.checkpoint_dir},
          {"synth", {{"count", c.synth.count}, {"height", c.synth.height}, {"width", c.synth.width},
                     {"haze", ranges_json(c.synth.haze)}}},
          {"mask", {{"k_fraction", c.mask.k_fraction}, {"dcp_patch", c.mask.dcp_patch}, {"window", c.mask.window}}},
          {"dcp", {{"omega", c.dcp.omega}, {"t_min", c.dcp.t_min}}},
          {"schedule", {{"steps", c.schedule.steps}, {"beta_min", c.schedule.beta_min},
                        {"beta_max", c.schedule.beta_max}}},
          {"spr", {{"steps", c.spr.steps}, {"lr", c.spr.lr}, {"use_prompt", c.spr.use_prompt}}},
          {"hcr", {{"steps", c.hcr.steps}, {"lr", c.hcr.lr}, {"optimizer", c.hcr.optimizer},
                   {"momentum", c.hcr.momentum},
                   {"lambda_p", c.hcr.lambda_p}, {"teacher_forced", c.hcr.teacher_forced},
                   {"use_wst", c.hcr.use_wst}, {"use_mask", c.hcr.use_mask}}},
          {"ablation", {{"eval_fraction", c.ablation.eval_fraction}}}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  {
    Reader r(j, "");
    r.get("seed", c.seed);
    r.get("dataset_root", c.dataset_root);
    r.get("output_dir", c.output_dir);
    r.get("checkpoint_dir", c.checkpoint_dir);
    if (const json* s = r.object("synth")) {
      Reader rs(*s, "synth");
      rs.get("count", c.synth.count);
      rs.get("height", c.synth.height);
      rs.get("width", c.synth.width);
      if (const json* h = rs.object("haze")) {
        Reader rh(*h, "synth.haze");
        rh.get_rgb("light_min", c.synth.haze.light_min);
        rh.get_rgb("light_max", c.synth.haze.light_max);
        rh.get("beta_min", c.synth.haze.beta_min);
        rh.get("beta_max", c.synth.haze.beta_max);
        std::vector<std::string> kinds;
        rh.get("depth_kinds", kinds);
        rh.finish();
        if (h->contains("depth_kinds")) {
          c.synth.haze.depth_kinds.clear();
          for (const std::string& k : kinds) {
            try {
              c.synth.haze.depth_kinds.push_back(depth_kind_from_string(k));
            } catch (const Error&) {
              fail(ErrorCode::kConfig, "config: unknown depth kind '" + k + "'");
            }
          }
        }
      }
      rs.finish();
    }
    if (const json* m = r.object("mask")) {
      Reader rm(*m, "mask");
      rm.get("k_fraction", c.mask.k_fraction);
      rm.get("dcp_patch", c.mask.dcp_patch);
      rm.get("window", c.mask.window);
      rm.finish();
    }
    if (const json* d = r.object("dcp")) {
      Reader rd(*d, "dcp");
      rd.get("omega", c.dcp.omega);
      rd.get("t_min", c.dcp.t_min);
      rd.finish();
    }
    if (const json* s = r.object("schedule")) {
      Reader rs(*s, "schedule");
      rs.get("steps", c.schedule.steps);
      rs.get("beta_min", c.schedule.beta_min);
      rs.get("beta_max", c.schedule.beta_max);
      rs.finish();
    }
    if (const json* s = r.object("spr")) {
      Reader rs(*s, "spr");
      rs.get("steps", c.spr.steps);
      rs.get("lr", c.spr.lr);
      rs.get("use_prompt", c.spr.use_prompt);
      rs.finish();
    }
    if (const json* h = r.object("hcr")) {
      Reader rh(*h, "hcr");
      rh.get("steps", c.hcr.steps);
      rh.get("lr", c.hcr.lr);
      rh.get("optimizer", c.hcr.optimizer);
      rh.get("momentum", c.hcr.momentum);
      rh.get("lambda_p", c.hcr.lambda_p);
      rh.get("teacher_forced", c.hcr.teacher_forced);
      rh.get("use_wst", c.hcr.use_wst);
      rh.get("use_mask", c.hcr.use_mask);
      rh.finish();
    }
    if (const json* a = r.object("ablation")) {
      Reader ra(*a, "ablation");
      ra.get("eval_fraction", c.ablation.eval_fraction);
      ra.finish();
    }
    r.finish();
  }
  check(c.mask.k_fraction >= 0.0 && c.mask.k_fraction <= 1.0, "mask.k_fraction must lie in [0, 1]");
  check(c.mask.dcp_patch % 2 == 1, "mask.dcp_patch must be odd");
  check(c.mask.window >= 1, "mask.window must be positive");
  check(c.synth.height % 32 == 0 && c.synth.width % 32 == 0 && c.synth.height > 0 && c.synth.width > 0,
        "synth.height and synth.width must be positive multiples of 32");
  check(c.synth.haze.beta_min >= 0.0 && c.synth.haze.beta_min <= c.synth.haze.beta_max,
        "synth.haze needs 0 <= beta_min <= beta_max");
  check(c.hcr.optimizer == "adam" || c.hcr.optimizer == "momentum", "hcr.optimizer must be adam or momentum");
  check(!c.synth.haze.depth_kinds.empty(), "synth.haze.depth_kinds must not be empty");
  check(c.ablation.eval_fraction > 0.0 && c.ablation.eval_fraction < 1.0, "ablation.eval_fraction must lie in (0, 1)");
  try {
    (void)c.noise_schedule();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("config: schedule: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kMissingFile) throw;
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace prodehaze::pipeline
