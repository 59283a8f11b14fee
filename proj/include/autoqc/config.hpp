#pragma once

// RunConfig: one nested JSON document covering every pipeline stage. Unknown
// keys are rejected; AUTOQC_SEED in the environment overrides the master seed.

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include "autoqc/capiquant.hpp"
#include "autoqc/inference.hpp"
#include "autoqc/io.hpp"
#include "autoqc/metrics.hpp"
#include "autoqc/prompt.hpp"
#include "autoqc/synth.hpp"

namespace autoqc {

inline constexpr const char* kSeedEnvVar = "AUTOQC_SEED";

struct BackendConfig {
  std::string detector = "oracle";   // oracle | file
  std::string segmenter = "oracle";  // oracle | degraded | file
  std::string detections_path;       // file detector input
  std::string masks_path;            // file segmenter input
  std::optional<DegradationSpec> jitter;
  DegradationSpec degradation;
};

struct PreprocessConfig {
  bool wiener = true;
  std::optional<double> noise_var;
  bool contrast = true;
  double lo_pct = 1.0;
  double hi_pct = 99.0;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::vector<std::uint64_t> runs;  // test-run seeds; empty means a single run with `seed`
  SceneSpec scene;
  double fov_width_um = 42.5;
  double fov_height_um = 42.5;
  std::string image_format = "png";  // png | raw
  PromptMode prompt_mode = PromptMode::BoxAndPoints;
  EvalMode eval_mode = EvalMode::PaperLiteral;
  std::vector<IoUThresholdSpec> thresholds = standard_threshold_specs();
  BackendConfig backend;
  PreprocessConfig preprocess;
  AreaRule area_rule = AreaRule::PerInstance;
  Reduction reduction = Reduction::MeanAbs;
  int jobs = 1;

  std::vector<std::uint64_t> run_seeds() const { return runs.empty() ? std::vector<std::uint64_t>{seed} : runs; }
};

inline IoUThresholdSpec threshold_spec_from_string(const std::string& s) {
  if (s == "range" || s == "0.5:0.95") return IoUThresholdSpec::range();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return IoUThresholdSpec::single(v);
  } catch (const std::logic_error&) {
    throw ConfigError("invalid IoU threshold spec '" + s + "' (expected a number in (0,1) or 0.5:0.95)");
  }
}

namespace config_detail {

using io::Json;

class Section {
 public:
  Section(const Json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    for (const auto& [k, v] : j_.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) throw ConfigError(path_ + ": unknown key '" + k + "'");
    }
  }

  bool has(const char* k) const { return j_.contains(k); }
  const Json& at(const char* k) const { return j_.at(k); }
  std::string where(const char* k) const { return path_ + "." + k; }

  template <class T>
  void read(const char* k, T& out) const {
    if (!j_.contains(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(where(k) + ": wrong type");
    }
  }

  void read_range(const char* k, int& lo, int& hi) const {
    if (!j_.contains(k)) return;
    const auto& v = j_.at(k);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
      throw ConfigError(where(k) + ": expected [min, max] integers");
    lo = v[0].get<int>();
    hi = v[1].get<int>();
  }

  void read_range(const char* k, double& lo, double& hi) const {
    if (!j_.contains(k)) return;
    const auto& v = j_.at(k);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ConfigError(where(k) + ": expected [min, max] numbers");
    lo = v[0].get<double>();
    hi = v[1].get<double>();
  }

 private:
  const Json& j_;
  std::string path_;
};

inline DegradationSpec degradation_from_json(const Json& j, const std::string& path) {
  Section s(j, path, {"erode_px", "dilate_px", "shift", "flip_prob"});
  DegradationSpec d;
  s.read("erode_px", d.erode_px);
  s.read("dilate_px", d.dilate_px);
  s.read_range("shift", d.shift_dx, d.shift_dy);
  s.read("flip_prob", d.flip_prob);
  d.validate();
  return d;
}

inline Json degradation_to_json(const DegradationSpec& d) {
  Json j;
  j["erode_px"] = d.erode_px;
  j["dilate_px"] = d.dilate_px;
  j["shift"] = {d.shift_dx, d.shift_dy};
  j["flip_prob"] = d.flip_prob;
  return j;
}

}  // namespace config_detail

inline RunConfig config_from_json(const io::Json& j) {
  using config_detail::Section;
  RunConfig c;
  Section root(j, "config",
               {"seed", "runs", "scene", "fov_um", "image_format", "prompt_mode", "eval", "backend", "preprocess",
                "quantify", "jobs"});
  root.read("seed", c.seed);
  root.read("runs", c.runs);
  root.read_range("fov_um", c.fov_width_um, c.fov_height_um);
  root.read("image_format", c.image_format);
  if (c.image_format != "png" && c.image_format != "raw") throw ConfigError("config.image_format: expected png or raw");
  root.read("jobs", c.jobs);
  if (c.jobs < 1) throw ConfigError("config.jobs: must be >= 1");
  if (root.has("prompt_mode")) {
    std::string m;
    root.read("prompt_mode", m);
    c.prompt_mode = prompt_mode_from_name(m);
  }

  if (root.has("scene")) {
    Section s(root.at("scene"), "config.scene",
              {"width", "height", "cm_count", "capillaries_per_cm", "membrane_thickness_px", "relaxation_iters",
               "capillary_radius_px", "capillary_rim_px", "intensity"});
    s.read("width", c.scene.width);
    s.read("height", c.scene.height);
    s.read_range("cm_count", c.scene.cm_count_min, c.scene.cm_count_max);
    s.read_range("capillaries_per_cm", c.scene.capillaries_per_cm_min, c.scene.capillaries_per_cm_max);
    s.read("membrane_thickness_px", c.scene.membrane_thickness_px);
    s.read("relaxation_iters", c.scene.relaxation_iters);
    s.read_range("capillary_radius_px", c.scene.capillary_radius_min_px, c.scene.capillary_radius_max_px);
    s.read("capillary_rim_px", c.scene.capillary_rim_px);
    if (s.has("intensity")) {
      Section in(s.at("intensity"), "config.scene.intensity", {"membrane_level", "interior_level", "noise_sd"});
      in.read("membrane_level", c.scene.intensity.membrane_level);
      in.read("interior_level", c.scene.intensity.interior_level);
      in.read("noise_sd", c.scene.intensity.noise_sd);
    }
  }

  if (root.has("eval")) {
    Section e(root.at("eval"), "config.eval", {"mode", "thresholds"});
    if (e.has("mode")) {
      std::string m;
      e.read("mode", m);
      c.eval_mode = eval_mode_from_name(m);
    }
    if (e.has("thresholds")) {
      std::vector<std::string> ts;
      e.read("thresholds", ts);
      if (ts.empty()) throw ConfigError("config.eval.thresholds: must not be empty");
      c.thresholds.clear();
      for (const auto& t : ts) c.thresholds.push_back(threshold_spec_from_string(t));
    }
  }

  if (root.has("backend")) {
    Section b(root.at("backend"), "config.backend",
              {"detector", "segmenter", "detections", "masks", "jitter", "degradation"});
    b.read("detector", c.backend.detector);
    b.read("segmenter", c.backend.segmenter);
    b.read("detections", c.backend.detections_path);
    b.read("masks", c.backend.masks_path);
    if (b.has("jitter") && !b.at("jitter").is_null())
      c.backend.jitter = config_detail::degradation_from_json(b.at("jitter"), "config.backend.jitter");
    if (b.has("degradation"))
      c.backend.degradation = config_detail::degradation_from_json(b.at("degradation"), "config.backend.degradation");
  }
  if (c.backend.detector != "oracle" && c.backend.detector != "file")
    throw ConfigError("config.backend.detector: expected oracle or file");
  if (c.backend.segmenter != "oracle" && c.backend.segmenter != "degraded" && c.backend.segmenter != "file")
    throw ConfigError("config.backend.segmenter: expected oracle, degraded, or file");

  if (root.has("preprocess")) {
    Section p(root.at("preprocess"), "config.preprocess", {"wiener", "noise_var", "contrast", "contrast_pct"});
    p.read("wiener", c.preprocess.wiener);
    if (p.has("noise_var") && !p.at("noise_var").is_null()) {
      double v = 0;
      p.read("noise_var", v);
      c.preprocess.noise_var = v;
    }
    p.read("contrast", c.preprocess.contrast);
    p.read_range("contrast_pct", c.preprocess.lo_pct, c.preprocess.hi_pct);
  }

  if (root.has("quantify")) {
    Section q(root.at("quantify"), "config.quantify", {"area_rule", "reduction"});
    if (q.has("area_rule")) {
      std::string r;
      q.read("area_rule", r);
      if (r == "per_instance")
        c.area_rule = AreaRule::PerInstance;
      else if (r == "union")
        c.area_rule = AreaRule::Union;
      else
        throw ConfigError("config.quantify.area_rule: expected per_instance or union");
    }
    if (q.has("reduction")) {
      std::string r;
      q.read("reduction", r);
      c.reduction = reduction_from_name(r);
    }
  }

  c.scene.seed = c.seed;
  c.scene.validate();
  FovSpec{c.fov_width_um, c.fov_height_um, c.scene.width, c.scene.height}.validate();
  return c;
}

inline io::Json config_to_json(const RunConfig& c) {
  using io::Json;
  Json j;
  j["seed"] = c.seed;
  j["runs"] = c.runs;
  Json s;
  s["width"] = c.scene.width;
  s["height"] = c.scene.height;
  s["cm_count"] = {c.scene.cm_count_min, c.scene.cm_count_max};
  s["capillaries_per_cm"] = {c.scene.capillaries_per_cm_min, c.scene.capillaries_per_cm_max};
  s["membrane_thickness_px"] = c.scene.membrane_thickness_px;
  s["relaxation_iters"] = c.scene.relaxation_iters;
  s["capillary_radius_px"] = {c.scene.capillary_radius_min_px, c.scene.capillary_radius_max_px};
  s["capillary_rim_px"] = c.scene.capillary_rim_px;
  s["intensity"] = {{"membrane_level", c.scene.intensity.membrane_level},
                    {"interior_level", c.scene.intensity.interior_level},
                    {"noise_sd", c.scene.intensity.noise_sd}};
  j["scene"] = s;
  j["fov_um"] = {c.fov_width_um, c.fov_height_um};
  j["image_format"] = c.image_format;
  j["prompt_mode"] = std::string(prompt_mode_name(c.prompt_mode));
  Json e;
  e["mode"] = eval_mode_name(c.eval_mode);
  e["thresholds"] = Json::array();
  for (const auto& t : c.thresholds) e["thresholds"].push_back(t.label());
  j["eval"] = e;
  Json b;
  b["detector"] = c.backend.detector;
  b["segmenter"] = c.backend.segmenter;
  b["detections"] = c.backend.detections_path;
  b["masks"] = c.backend.masks_path;
  b["jitter"] = c.backend.jitter ? config_detail::degradation_to_json(*c.backend.jitter) : Json(nullptr);
  b["degradation"] = config_detail::degradation_to_json(c.backend.degradation);
  j["backend"] = b;
  Json p;
  p["wiener"] = c.preprocess.wiener;
  p["noise_var"] = c.preprocess.noise_var ? Json(*c.preprocess.noise_var) : Json(nullptr);
  p["contrast"] = c.preprocess.contrast;
  p["contrast_pct"] = {c.preprocess.lo_pct, c.preprocess.hi_pct};
  j["preprocess"] = p;
  j["quantify"] = {{"area_rule", c.area_rule == AreaRule::PerInstance ? "per_instance" : "union"},
                   {"reduction", c.reduction == Reduction::MeanAbs ? "mean_abs" : "mean_signed"}};
  j["jobs"] = c.jobs;
  return j;
}

inline RunConfig load_config(const io::fs::path& path) {
  try {
    return config_from_json(io::parse_json(io::read_text(path), path.string()));
  } catch (const SchemaError& e) {
    throw ConfigError(e.what());
  } catch (const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError(e.what());
  }
}

// Applies AUTOQC_SEED when set; returns true if it did.
inline bool apply_seed_override(RunConfig& c) {
  const char* v = std::getenv(kSeedEnvVar);
  if (!v || !*v) return false;
  char* end = nullptr;
  const auto seed = std::strtoull(v, &end, 10);
  if (*end != '\0') throw ConfigError(std::string(kSeedEnvVar) + ": not an unsigned integer");
  c.seed = seed;
  c.scene.seed = seed;
  return true;
}

}  // namespace autoqc
