// autoqc command-line front end. Exit codes: 0 success, 1 runtime error,
// 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "autoqc.hpp"

namespace fs = std::filesystem;
using namespace autoqc;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out = ".";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed (overrides config and AUTOQC_SEED)");
  app->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  apply_seed_override(cfg);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.scene.seed = *c.seed;
  }
  if (c.jobs) cfg.jobs = *c.jobs;
  return cfg;
}

void log_config(const RunConfig& cfg) {
  std::cerr << "autoqc: resolved config " << config_to_json(cfg).dump() << '\n';
}

std::vector<IoUThresholdSpec> parse_thresholds(const std::vector<std::string>& v) {
  std::vector<IoUThresholdSpec> out;
  for (const auto& s : v) out.push_back(threshold_spec_from_string(s));
  return out;
}

EvalMode eval_mode_from(const std::string& s) {
  if (s == "paper") return EvalMode::PaperLiteral;
  if (s == "dataset") return EvalMode::DatasetLevel;
  throw ConfigError("unknown eval mode '" + s + "' (expected paper or dataset)");
}

void check_backend(const BackendConfig& b) {
  if (b.detector != "oracle" && b.detector != "file")
    throw ConfigError("unknown detector '" + b.detector + "' (expected oracle or file)");
  if (b.segmenter != "oracle" && b.segmenter != "degraded" && b.segmenter != "file")
    throw ConfigError("unknown segmenter '" + b.segmenter + "' (expected oracle, degraded or file)");
  if (b.detector == "file" && b.detections_path.empty()) throw ConfigError("file detector needs a detections file");
  if (b.segmenter == "file" && b.masks_path.empty()) throw ConfigError("file segmenter needs a masks file");
}

std::vector<double> read_number_csv(const std::string& path) {
  std::vector<double> values;
  std::istringstream in(io::read_text(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      const auto e = cell.find_last_not_of(" \t\r");
      cell = cell.substr(b, e - b + 1);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cell.size()) {
        if (line_no == 1) break;  // header
        throw Error(path + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
      }
      values.push_back(v);
    }
  }
  return values;
}

// metric,model,value rows; models keep first-appearance order.
std::map<std::string, std::vector<stats::RunSeries>> read_series_table(const std::string& path) {
  std::map<std::string, std::vector<stats::RunSeries>> out;
  std::istringstream in(io::read_text(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (line_no == 1 && f.size() == 3 && f[0] == "metric") continue;
    if (f.size() != 3) throw Error(path + ":" + std::to_string(line_no) + ": expected metric,model,value");
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(path + ":" + std::to_string(line_no) + ": not a number: '" + f[2] + "'");
    }
    auto& models = out[f[0]];
    auto it = std::find_if(models.begin(), models.end(), [&](const auto& s) { return s.label == f[1]; });
    if (it == models.end()) {
      models.push_back({f[1], {}});
      it = models.end() - 1;
    }
    it->values.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"autoqc: prompt generation, segmentation evaluation and capillarization quantification"};
  app.require_subcommand(1);

  // synth
  Common synth_c;
  std::size_t n_scenes = 20;
  std::string synth_format;
  auto* synth = app.add_subcommand("synth", "generate a synthetic tissue dataset");
  add_common(synth, synth_c);
  synth->add_option("--scenes", n_scenes, "number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--format", synth_format, "image format")->check(CLI::IsMember({"png", "raw"}));

  // preprocess
  Common pre_c;
  std::string pre_dataset;
  auto* pre = app.add_subcommand("preprocess", "Wiener filter and contrast stretch every image");
  add_common(pre, pre_c);
  pre->add_option("--dataset", pre_dataset, "dataset directory or manifest")->required();

  // detect
  Common det_c;
  std::string det_dataset, det_backend, det_file;
  auto* det = app.add_subcommand("detect", "run the detector; writes detections.json");
  add_common(det, det_c);
  det->add_option("--dataset", det_dataset, "dataset directory or manifest")->required();
  det->add_option("--detector", det_backend, "oracle | file")->check(CLI::IsMember({"oracle", "file"}));
  det->add_option("--detections-in", det_file, "detections file for the file detector");

  // prompt
  Common pr_c;
  std::string pr_detections, pr_mode;
  auto* pr = app.add_subcommand("prompt", "turn detections into prompts; writes prompts.json");
  add_common(pr, pr_c);
  pr->add_option("--detections", pr_detections, "detections.json")->required();
  pr->add_option("--mode", pr_mode, "points | box | box+points")->check(CLI::IsMember({"points", "box", "box+points"}));

  // segment
  Common seg_c;
  std::string seg_dataset, seg_prompts, seg_backend, seg_file;
  auto* seg = app.add_subcommand("segment", "segment every prompt; writes masks.json");
  add_common(seg, seg_c);
  seg->add_option("--dataset", seg_dataset, "dataset directory or manifest")->required();
  seg->add_option("--prompts", seg_prompts, "prompts.json")->required();
  seg->add_option("--segmenter", seg_backend, "oracle | degraded | file")
      ->check(CLI::IsMember({"oracle", "degraded", "file"}));
  seg->add_option("--masks-in", seg_file, "masks file for the file segmenter");

  // evaluate
  Common ev_c;
  std::string ev_dataset, ev_masks, ev_mode;
  std::vector<std::string> ev_thresholds;
  auto* ev = app.add_subcommand("evaluate", "mAP/mAR/F1 of predicted masks; writes report.csv and report.txt");
  add_common(ev, ev_c);
  ev->add_option("--dataset", ev_dataset, "dataset directory or manifest")->required();
  ev->add_option("--masks", ev_masks, "masks.json")->required();
  ev->add_option("--mode", ev_mode, "paper | dataset")->check(CLI::IsMember({"paper", "dataset"}));
  ev->add_option("--thresholds", ev_thresholds, "IoU thresholds, e.g. 0.5,0.75,range")->delimiter(',');

  // quantify
  Common q_c;
  std::string q_dataset, q_masks;
  auto* q = app.add_subcommand("quantify", "capillarization measures and errors against ground truth");
  add_common(q, q_c);
  q->add_option("--dataset", q_dataset, "dataset directory or manifest")->required();
  q->add_option("--masks", q_masks, "masks.json")->required();

  // stats
  Common st_c;
  bool st_paired = false, st_unpaired = false, st_welch = false;
  std::vector<std::string> st_files;
  std::string st_table;
  double st_alpha = 0.05;
  auto* st = app.add_subcommand("stats", "t-tests between run series");
  add_common(st, st_c);
  auto* o_paired = st->add_flag("--paired", st_paired, "paired t-test");
  auto* o_unpaired = st->add_flag("--unpaired", st_unpaired, "unpaired (pooled variance) t-test");
  auto* o_welch = st->add_flag("--welch", st_welch, "unpaired Welch t-test");
  o_paired->excludes(o_unpaired)->excludes(o_welch);
  o_unpaired->excludes(o_welch);
  auto* o_files = st->add_option("files", st_files, "two CSV files of numbers")->expected(2);
  auto* o_table = st->add_option("--table", st_table, "CSV of metric,model,value; writes significance.csv");
  o_files->excludes(o_table);
  st->add_option("--alpha", st_alpha, "significance level")->check(CLI::Range(0.0, 1.0));

  // pipeline
  Common pl_c;
  std::string pl_dataset, pl_prompt_mode, pl_eval_mode, pl_detector, pl_segmenter, pl_det_file, pl_mask_file;
  std::size_t pl_scenes = 20;
  auto* pl = app.add_subcommand("pipeline", "detect, prompt, segment, evaluate and quantify in one go");
  add_common(pl, pl_c);
  pl->add_option("--dataset", pl_dataset, "dataset directory or manifest; synthesized into <out>/dataset if absent");
  pl->add_option("--scenes", pl_scenes, "scenes to synthesize when no dataset is given")->check(CLI::PositiveNumber);
  pl->add_option("--prompt-mode", pl_prompt_mode, "points | box | box+points")
      ->check(CLI::IsMember({"points", "box", "box+points"}));
  pl->add_option("--eval-mode", pl_eval_mode, "paper | dataset")->check(CLI::IsMember({"paper", "dataset"}));
  pl->add_option("--detector", pl_detector, "oracle | file")->check(CLI::IsMember({"oracle", "file"}));
  pl->add_option("--segmenter", pl_segmenter, "oracle | degraded | file")
      ->check(CLI::IsMember({"oracle", "degraded", "file"}));
  pl->add_option("--detections-in", pl_det_file, "detections file for the file detector");
  pl->add_option("--masks-in", pl_mask_file, "masks file for the file segmenter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      auto cfg = resolve(synth_c);
      if (!synth_format.empty()) cfg.image_format = synth_format;
      log_config(cfg);
      const auto scenes = generate_scenes(cfg.scene, n_scenes, cfg.seed, cfg.jobs);
      const auto m = scene_to_dataset(scenes, synth_c.out, cfg.fov_width_um, cfg.fov_height_um, cfg.image_format);
      std::size_t cms = 0, caps = 0;
      for (const auto& a : m.annotations) (a.category == Category::CM ? cms : caps)++;
      std::printf("scenes %zu  cardiomyocytes %zu (%.2f/scene)  capillaries %zu (%.2f/scene)\n", scenes.size(), cms,
                  double(cms) / double(scenes.size()), caps, double(caps) / double(scenes.size()));
    } else if (pre->parsed()) {
      const auto cfg = resolve(pre_c);
      log_config(cfg);
      const auto ds = load_dataset(pre_dataset);
      parallel_for(ds.manifest.images.size(), cfg.jobs, [&](std::size_t i) {
        const auto& im = ds.manifest.images[i];
        io::write_image(fs::path(pre_c.out) / im.file, preprocess_image(ds.load_image(im), cfg.preprocess));
      });
      io::save_manifest(fs::path(pre_c.out) / kManifestName, ds.manifest);
    } else if (det->parsed()) {
      auto cfg = resolve(det_c);
      if (!det_backend.empty()) cfg.backend.detector = det_backend;
      if (!det_file.empty()) cfg.backend.detections_path = det_file;
      check_backend(cfg.backend);
      log_config(cfg);
      const auto ds = load_dataset(det_dataset);
      io::save_detections(fs::path(det_c.out) / "detections.json", run_detect(ds, cfg.backend, cfg.seed, cfg.jobs));
    } else if (pr->parsed()) {
      auto cfg = resolve(pr_c);
      if (!pr_mode.empty()) cfg.prompt_mode = prompt_mode_from_name(pr_mode);
      log_config(cfg);
      io::save_prompts(fs::path(pr_c.out) / "prompts.json",
                       run_prompt(io::load_detections(pr_detections), cfg.prompt_mode));
    } else if (seg->parsed()) {
      auto cfg = resolve(seg_c);
      if (!seg_backend.empty()) cfg.backend.segmenter = seg_backend;
      if (!seg_file.empty()) cfg.backend.masks_path = seg_file;
      check_backend(cfg.backend);
      log_config(cfg);
      const auto ds = load_dataset(seg_dataset);
      const auto prompts = io::load_prompts(seg_prompts);
      io::save_masks(fs::path(seg_c.out) / "masks.json",
                     run_segment(ds, prompts, cfg.backend, cfg.seed, &cfg.preprocess, cfg.jobs));
    } else if (ev->parsed()) {
      auto cfg = resolve(ev_c);
      if (!ev_mode.empty()) cfg.eval_mode = eval_mode_from(ev_mode);
      if (!ev_thresholds.empty()) cfg.thresholds = parse_thresholds(ev_thresholds);
      log_config(cfg);
      const auto ds = load_dataset(ev_dataset);
      const auto masks = io::load_masks(ev_masks);
      const auto r = evaluate(build_eval_set(ds, masks, cfg.jobs), cfg.thresholds, cfg.eval_mode);
      write_eval_outputs(ev_c.out, r);
      std::cout << report::eval_text(r);
    } else if (q->parsed()) {
      const auto cfg = resolve(q_c);
      log_config(cfg);
      const auto ds = load_dataset(q_dataset);
      write_quantify_outputs(q_c.out, run_quantify(ds, io::load_masks(q_masks), cfg.area_rule, cfg.jobs),
                             cfg.reduction);
    } else if (st->parsed()) {
      if (!st_paired && !st_unpaired && !st_welch)
        throw ConfigError("stats: choose one of --paired, --unpaired or --welch");
      const auto kind = st_paired ? stats::TTestKind::Paired
                                  : (st_unpaired ? stats::TTestKind::Unpaired : stats::TTestKind::Welch);
      if (!st_table.empty()) {
        std::vector<stats::Comparison> rows;
        for (const auto& [metric, models] : read_series_table(st_table)) {
          auto r = stats::significance_table(metric, models, kind, st_alpha);
          rows.insert(rows.end(), r.begin(), r.end());
        }
        io::write_text(fs::path(st_c.out) / "significance.csv", report::significance_csv(rows));
        std::cout << report::significance_csv(rows);
      } else {
        if (st_files.size() != 2) throw ConfigError("stats: give two CSV files or --table");
        const stats::RunSeries a{st_files[0], read_number_csv(st_files[0])};
        const stats::RunSeries b{st_files[1], read_number_csv(st_files[1])};
        const auto r = stats::t_test(a, b, kind);
        std::cout << "a " << stats::format_mean_sd(stats::summarize(a)) << "  b "
                  << stats::format_mean_sd(stats::summarize(b)) << '\n'
                  << "kind " << stats::ttest_kind_name(kind) << "  t " << report::num(r.t) << "  df "
                  << report::num(r.df) << "  p " << report::num(r.p) << '\n';
      }
    } else if (pl->parsed()) {
      auto cfg = resolve(pl_c);
      if (!pl_prompt_mode.empty()) cfg.prompt_mode = prompt_mode_from_name(pl_prompt_mode);
      if (!pl_eval_mode.empty()) cfg.eval_mode = eval_mode_from(pl_eval_mode);
      if (!pl_detector.empty()) cfg.backend.detector = pl_detector;
      if (!pl_segmenter.empty()) cfg.backend.segmenter = pl_segmenter;
      if (!pl_det_file.empty()) cfg.backend.detections_path = pl_det_file;
      if (!pl_mask_file.empty()) cfg.backend.masks_path = pl_mask_file;
      check_backend(cfg.backend);
      log_config(cfg);
      fs::path dataset = pl_dataset;
      if (dataset.empty()) {
        dataset = fs::path(pl_c.out) / "dataset";
        scene_to_dataset(generate_scenes(cfg.scene, pl_scenes, cfg.seed, cfg.jobs), dataset, cfg.fov_width_um,
                         cfg.fov_height_um, cfg.image_format);
      }
      const auto runs = run_pipeline(load_dataset(dataset), cfg, pl_c.out);
      for (const auto& r : runs) std::cout << "run seed " << r.seed << '\n' << report::eval_text(r.eval);
    }
  } catch (const ConfigError& e) {
    std::cerr << "autoqc: config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "autoqc: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
