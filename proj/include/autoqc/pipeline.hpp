#pragma once

// Stage runners shared by the CLI subcommands and the one-shot pipeline:
// synth -> (preprocess) -> detect -> prompt -> segment -> evaluate -> quantify.
// Every stage works image by image and returns results in image-id order.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "autoqc/capiquant.hpp"
#include "autoqc/config.hpp"
#include "autoqc/inference.hpp"
#include "autoqc/io.hpp"
#include "autoqc/metrics.hpp"
#include "autoqc/parallel.hpp"
#include "autoqc/preprocess.hpp"
#include "autoqc/prompt.hpp"
#include "autoqc/report.hpp"
#include "autoqc/stats.hpp"
#include "autoqc/store.hpp"
#include "autoqc/synth.hpp"

namespace autoqc {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "dataset.json";

struct Dataset {
  fs::path root;  // directory holding dataset.json; image paths are relative to it
  io::DatasetManifest manifest;

  const io::ManifestImage& image_info(std::int64_t id) const {
    const auto* im = manifest.find_image(id);
    if (!im) throw Error("unknown image id " + std::to_string(id));
    return *im;
  }
  GrayImage load_image(const io::ManifestImage& im) const { return io::read_image(root / im.file); }
  LabelImage truth(std::int64_t image_id) const { return io::truth_from_manifest(manifest, image_id); }

  std::vector<std::int64_t> image_ids() const {
    std::vector<std::int64_t> ids;
    for (const auto& im : manifest.images) ids.push_back(im.id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }
};

// Accepts a dataset directory or a path to its dataset.json.
inline Dataset load_dataset(const fs::path& path) {
  const fs::path manifest = fs::is_directory(path) ? path / kManifestName : path;
  if (!fs::exists(manifest)) throw Error("dataset manifest not found: " + manifest.string());
  Dataset d{manifest.parent_path(), io::load_manifest(manifest)};
  io::check_manifest_boxes(d.manifest);
  return d;
}

// Writes scenes as images/<id>.<ext> plus dataset.json. Image ids are 1..n;
// annotation ids are dataset-unique and double as instance labels.
inline io::DatasetManifest scene_to_dataset(const std::vector<SyntheticScene>& scenes, const fs::path& out_dir,
                                            double fov_width_um = 42.5, double fov_height_um = 42.5,
                                            const std::string& format = "png") {
  if (scenes.empty()) throw Error("scene_to_dataset: no scenes");
  io::DatasetManifest m;
  std::int64_t next_ann = 1;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& s = scenes[i];
    io::ManifestImage im;
    im.id = std::int64_t(i) + 1;
    im.file = "images/" + std::to_string(im.id) + "." + format;
    im.width = s.image.width();
    im.height = s.image.height();
    im.fov_width_um = fov_width_um;
    im.fov_height_um = fov_height_um;
    try {
      io::write_image(out_dir / im.file, s.image);
    } catch (const std::exception& e) {
      throw Error(std::string("scene_to_dataset: ") + e.what());
    }
    m.images.push_back(im);
    for (const auto& a : s.annotations) {
      io::ManifestAnnotation ma;
      ma.id = next_ann++;
      ma.image_id = im.id;
      ma.category = a.category;
      ma.box = a.box;
      ma.rle = rle_encode(a.mask);
      m.annotations.push_back(std::move(ma));
    }
  }
  io::save_manifest(out_dir / kManifestName, m);
  return m;
}

inline std::vector<SyntheticScene> generate_scenes(const SceneSpec& base, std::size_t count, std::uint64_t seed,
                                                   int jobs = 1) {
  std::vector<SyntheticScene> scenes(count);
  parallel_for(count, jobs, [&](std::size_t i) {
    SceneSpec s = base;
    s.seed = derive_seed(seed, i);
    scenes[i] = generate_scene(s);
  });
  return scenes;
}

inline GrayImage preprocess_image(const GrayImage& img, const PreprocessConfig& p) {
  GrayImage out = img;
  if (p.wiener) out = wiener3x3(out, p.noise_var);
  if (p.contrast) out = contrast_stretch(out, p.lo_pct, p.hi_pct);
  return out;
}

// ---------------------------------------------------------------------------
// Stages

inline std::vector<StoredDetection> run_detect(const Dataset& ds, const BackendConfig& backend, std::uint64_t run_seed,
                                               int jobs = 1) {
  const auto ids = ds.image_ids();
  std::vector<std::vector<Detection>> per_image(ids.size());
  PredictionStore store;
  if (backend.detector == "file") {
    store.detections = io::load_detections(backend.detections_path);
    for (const auto& d : store.detections)
      if (!ds.manifest.find_image(d.image_id))
        throw Error("detections reference unknown image id " + std::to_string(d.image_id));
  }
  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    if (backend.detector == "oracle") {
      std::optional<DegradationSpec> jitter = backend.jitter;
      if (jitter) jitter->seed = derive_seed(run_seed, std::uint64_t(ids[i]));
      per_image[i] = oracle_detect(ds.truth(ids[i]), jitter);
    } else {
      per_image[i] = file_detect(ids[i], store);
    }
  });
  std::vector<StoredDetection> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (const auto& d : per_image[i]) out.push_back({ids[i], d});
  return out;
}

inline std::vector<ImagePrompts> run_prompt(const std::vector<StoredDetection>& detections, PromptMode mode) {
  std::map<std::int64_t, std::vector<Detection>> by_image;
  for (const auto& d : detections) by_image[d.image_id].push_back(d.detection);
  std::vector<ImagePrompts> out;
  for (const auto& [id, dets] : by_image) out.push_back({id, generate_prompts(dets, mode)});
  return out;
}

inline std::vector<StoredMask> run_segment(const Dataset& ds, const std::vector<ImagePrompts>& prompts,
                                           const BackendConfig& backend, std::uint64_t run_seed,
                                           const PreprocessConfig* preprocess = nullptr, int jobs = 1) {
  PredictionStore store;
  if (backend.segmenter == "file") store.masks = io::load_masks(backend.masks_path);
  std::vector<std::vector<StoredMask>> per_image(prompts.size());
  parallel_for(prompts.size(), jobs, [&](std::size_t i) {
    const auto& ip = prompts[i];
    const auto& info = ds.image_info(ip.image_id);
    std::unique_ptr<Segmenter> seg;
    GrayImage image;
    if (backend.segmenter == "file") {
      image = GrayImage(info.width, info.height);
      seg = std::make_unique<FileSegmenter>(store, ip.image_id);
    } else {
      image = ds.load_image(info);
      if (preprocess) image = preprocess_image(image, *preprocess);
      auto truth = ds.truth(ip.image_id);
      if (backend.segmenter == "oracle") {
        seg = std::make_unique<ClipSegmenter>(std::move(truth));
      } else {
        DegradationSpec spec = backend.degradation;
        spec.seed = derive_seed(run_seed, std::uint64_t(ip.image_id));
        seg = std::make_unique<DegradedSegmenter>(std::move(truth), spec);
      }
    }
    for (const auto& p : ip.prompts) {
      const auto mask = seg->segment(image, p);
      per_image[i].push_back({ip.image_id, p.source_id, p.category, p.confidence, rle_encode(mask)});
    }
  });
  std::vector<StoredMask> out;
  for (auto& v : per_image)
    for (auto& m : v) out.push_back(std::move(m));
  return out;
}

namespace detail {

// One (possibly empty) list per dataset image, built before any worker reads it.
inline std::map<std::int64_t, std::vector<const StoredMask*>> group_masks(const Dataset& ds,
                                                                          const std::vector<StoredMask>& masks) {
  std::map<std::int64_t, std::vector<const StoredMask*>> by_image;
  for (auto id : ds.image_ids()) by_image[id];
  for (const auto& m : masks) {
    const auto it = by_image.find(m.image_id);
    if (it == by_image.end()) throw Error("masks reference unknown image id " + std::to_string(m.image_id));
    const auto& info = ds.image_info(m.image_id);
    if (m.segmentation.width != info.width || m.segmentation.height != info.height)
      throw DimensionError("mask for image " + std::to_string(m.image_id) + " does not match image dimensions");
    it->second.push_back(&m);
  }
  return by_image;
}

}  // namespace detail

inline std::vector<ImageEval> build_eval_set(const Dataset& ds, const std::vector<StoredMask>& masks, int jobs = 1) {
  const auto ids = ds.image_ids();
  std::vector<ImageEval> out(ids.size());
  const auto by_image = detail::group_masks(ds, masks);
  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    const auto& info = ds.image_info(ids[i]);
    auto& e = out[i];
    e.image_id = ids[i];
    for (const auto& a : ds.manifest.annotations)
      if (a.image_id == ids[i]) e.truths.push_back({a.mask(info.width, info.height), a.category, a.id});
    for (const auto* m : by_image.at(ids[i]))
      e.preds.push_back({rle_decode(m->segmentation), m->category, m->score, m->prompt_source_id});
  });
  return out;
}

inline std::vector<report::ImageQuantification> run_quantify(const Dataset& ds, const std::vector<StoredMask>& masks,
                                                             AreaRule rule = AreaRule::PerInstance, int jobs = 1) {
  const auto ids = ds.image_ids();
  const auto by_image = detail::group_masks(ds, masks);
  std::vector<report::ImageQuantification> out(ids.size());
  parallel_for(ids.size(), jobs, [&](std::size_t i) {
    const auto& info = ds.image_info(ids[i]);
    const FovSpec fov{info.fov_width_um, info.fov_height_um, info.width, info.height};
    std::vector<CategorizedMask> pred, truth;
    for (const auto* m : by_image.at(ids[i])) pred.push_back({rle_decode(m->segmentation), m->category});
    for (const auto& a : ds.manifest.annotations)
      if (a.image_id == ids[i]) truth.push_back({a.mask(info.width, info.height), a.category});
    auto& q = out[i];
    q.image_id = ids[i];
    q.predicted = measure(pred, fov, rule);
    q.truth = measure(truth, fov, rule);
    q.error = assess(q.predicted, q.truth);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Output files

inline void write_eval_outputs(const fs::path& out_dir, const EvalReport& r) {
  io::write_text(out_dir / "report.csv", report::eval_csv(r));
  io::write_text(out_dir / "report.txt", report::eval_text(r));
}

inline std::array<ErrorSummary, 7> write_quantify_outputs(const fs::path& out_dir,
                                                          const std::vector<report::ImageQuantification>& q,
                                                          Reduction reduction) {
  std::vector<std::pair<std::int64_t, CapillarizationReport>> pred, truth;
  std::vector<AssessmentError> errors;
  for (const auto& r : q) {
    pred.emplace_back(r.image_id, r.predicted);
    truth.emplace_back(r.image_id, r.truth);
    errors.push_back(r.error);
  }
  io::write_text(out_dir / "capillarization.csv", report::capillarization_csv(pred));
  io::write_text(out_dir / "capillarization_truth.csv", report::capillarization_csv(truth));
  io::write_text(out_dir / "errors.csv", report::errors_csv(q));
  const auto summary = aggregate_errors(errors, reduction);
  io::write_text(out_dir / "error_summary.csv", report::error_summary_csv(summary, reduction));
  return summary;
}

struct RunOutcome {
  std::uint64_t seed = 0;
  EvalReport eval;
  std::array<ErrorSummary, 7> errors;
};

// One full pass for one test-run seed; writes every intermediate and report.
inline RunOutcome run_once(const Dataset& ds, const RunConfig& cfg, std::uint64_t run_seed, const fs::path& out_dir) {
  const auto detections = run_detect(ds, cfg.backend, run_seed, cfg.jobs);
  io::save_detections(out_dir / "detections.json", detections);
  const auto prompts = run_prompt(detections, cfg.prompt_mode);
  io::save_prompts(out_dir / "prompts.json", prompts);
  const auto masks = run_segment(ds, prompts, cfg.backend, run_seed, &cfg.preprocess, cfg.jobs);
  io::save_masks(out_dir / "masks.json", masks);
  RunOutcome r;
  r.seed = run_seed;
  r.eval = evaluate(build_eval_set(ds, masks, cfg.jobs), cfg.thresholds, cfg.eval_mode);
  write_eval_outputs(out_dir, r.eval);
  r.errors = write_quantify_outputs(out_dir, run_quantify(ds, masks, cfg.area_rule, cfg.jobs), cfg.reduction);
  return r;
}

// mean +/- SD of each metric across test runs.
inline std::string runs_summary_csv(const std::vector<RunOutcome>& runs) {
  std::ostringstream out;
  out << "metric,threshold_spec,category,runs,mean,sd,formatted\n";
  if (runs.empty()) return out.str();
  auto emit = [&](const std::string& metric, const std::string& spec, const std::string& cat,
                  const std::vector<double>& v) {
    out << metric << ',' << spec << ',' << cat << ',' << v.size() << ',';
    if (v.size() >= 2) {
      const auto s = stats::summarize(v);
      out << report::num(s.mean) << ',' << report::num(s.sd) << ',' << stats::format_mean_sd(s) << '\n';
    } else {
      out << report::num(v.empty() ? 0.0 : v[0]) << ",,\n";
    }
  };
  const auto& first = runs.front().eval;
  for (std::size_t e = 0; e < first.entries.size(); ++e) {
    const auto label = first.entries[e].spec.label();
    for (int k = 0; k < 3; ++k) {
      std::vector<double> map, mar, f1;
      const char* cat = k == 0 ? "ALL" : (k == 1 ? "CM" : "CAP");
      for (const auto& r : runs) {
        const auto& m = k == 0 ? r.eval.entries[e].all : r.eval.entries[e].per_category[std::size_t(k - 1)];
        if (!m.defined) continue;
        map.push_back(m.map);
        mar.push_back(m.mar);
        f1.push_back(m.f1);
      }
      if (map.empty()) continue;
      emit("mAP", label, cat, map);
      emit("mAR", label, cat, mar);
      emit("F1", label, cat, f1);
    }
  }
  for (auto m : kMeasurements) {
    std::vector<double> v;
    for (const auto& r : runs)
      if (r.errors[std::size_t(m)].mean) v.push_back(*r.errors[std::size_t(m)].mean);
    if (!v.empty()) emit("error_" + measurement_name(m), "", "", v);
  }
  return out.str();
}

// Runs every configured test-run seed. A single run writes into out_dir; several
// runs write into out_dir/run_<k>/ plus runs_summary.csv.
inline std::vector<RunOutcome> run_pipeline(const Dataset& ds, const RunConfig& cfg, const fs::path& out_dir) {
  io::write_text(out_dir / "config.resolved.json", io::dump_json(config_to_json(cfg)));
  const auto seeds = cfg.run_seeds();
  std::vector<RunOutcome> runs;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const auto dir = seeds.size() == 1 ? out_dir : out_dir / ("run_" + std::to_string(k + 1));
    runs.push_back(run_once(ds, cfg, seeds[k], dir));
  }
  io::write_text(out_dir / "runs_summary.csv", runs_summary_csv(runs));
  return runs;
}

}  // namespace autoqc
