#pragma once

// Instance-segmentation evaluation: category-partitioned greedy matching and
// mAP / mAR / F1 at single IoU thresholds or the 0.50:0.05:0.95 range.

#include <algorithm>
#include <cstdio>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "autoqc/error.hpp"
#include "autoqc/geometry.hpp"
#include "autoqc/prompt.hpp"

namespace autoqc {

struct PredInstance {
  BitMask mask;
  Category category = Category::CM;
  double confidence = 1.0;
  std::int64_t id = 0;
};

struct TruthInstance {
  BitMask mask;
  Category category = Category::CM;
  std::int64_t id = 0;
};

struct ImageEval {
  std::int64_t image_id = 0;
  std::vector<PredInstance> preds;
  std::vector<TruthInstance> truths;
};

class IoUThresholdSpec {
 public:
  static IoUThresholdSpec single(double phi) {
    if (!(phi > 0.0 && phi < 1.0)) throw ConfigError("IoU threshold must lie in (0, 1)");
    return IoUThresholdSpec(false, phi);
  }
  static IoUThresholdSpec range() { return IoUThresholdSpec(true, 0.0); }

  bool is_range() const { return range_; }

  // Range thresholds are k/100 for k = 50, 55, ..., 95, so 0.6 is the same double
  // as 300.0/500.0.
  std::vector<double> thresholds() const {
    if (!range_) return {phi_};
    std::vector<double> t;
    for (int k = 50; k <= 95; k += 5) t.push_back(double(k) / 100.0);
    return t;
  }

  std::string label() const {
    if (range_) return "0.5:0.95";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", phi_);
    return buf;
  }

  friend bool operator==(const IoUThresholdSpec&, const IoUThresholdSpec&) = default;

 private:
  IoUThresholdSpec(bool range, double phi) : range_(range), phi_(phi) {}
  bool range_ = false;
  double phi_ = 0.5;
};

inline std::vector<IoUThresholdSpec> standard_threshold_specs() {
  return {IoUThresholdSpec::single(0.5), IoUThresholdSpec::single(0.75), IoUThresholdSpec::range()};
}

struct MatchedPair {
  std::int64_t pred_id = 0;
  std::int64_t gt_id = 0;
  double iou = 0.0;
};

struct CategoryMatch {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  // Diagnostic only: predictions overlapping a truth of another category at >= phi.
  int tn_diagnostic = 0;
  std::vector<MatchedPair> pairs;
  // Per prediction, in processing order (confidence desc, id asc): matched or not.
  std::vector<std::pair<std::int64_t, bool>> pred_outcomes;
};

struct MatchResult {
  double threshold = 0.5;
  std::array<CategoryMatch, 2> by_category;

  CategoryMatch& operator[](Category c) { return by_category[category_id(c) - 1]; }
  const CategoryMatch& operator[](Category c) const { return by_category[category_id(c) - 1]; }
};

// Pairwise IoU between one image's predictions and truths. Only pixels inside the
// overlap of the two tight boxes are visited.
class IoUTable {
 public:
  IoUTable(const std::vector<PredInstance>& preds, const std::vector<TruthInstance>& truths)
      : np_(preds.size()), nt_(truths.size()), iou_(np_ * nt_, 0.0) {
    std::vector<PixelBox> pb, tb;
    std::vector<std::int64_t> pa, ta;
    for (const auto& t : truths) {
      if (!preds.empty()) detail::require_same_shape(preds.front().mask, t.mask, "match_instances");
      tb.push_back(mask_pixel_box(t.mask));
      ta.push_back(mask_area_px(t.mask));
      if (ta.back() == 0) throw Error("match_instances: ground-truth instance " + std::to_string(t.id) + " is empty");
    }
    for (const auto& p : preds) {
      if (!truths.empty()) detail::require_same_shape(p.mask, truths.front().mask, "match_instances");
      pb.push_back(mask_pixel_box(p.mask));
      pa.push_back(mask_area_px(p.mask));
    }
    for (std::size_t i = 0; i < np_; ++i)
      for (std::size_t j = 0; j < nt_; ++j) {
        const int x0 = std::max(pb[i].x0, tb[j].x0), x1 = std::min(pb[i].x1, tb[j].x1);
        const int y0 = std::max(pb[i].y0, tb[j].y0), y1 = std::min(pb[i].y1, tb[j].y1);
        std::int64_t inter = 0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) inter += preds[i].mask(x, y) && truths[j].mask(x, y);
        iou_[i * nt_ + j] = double(inter) / double(pa[i] + ta[j] - inter);
      }
  }

  double operator()(std::size_t pred, std::size_t truth) const { return iou_[pred * nt_ + truth]; }

 private:
  std::size_t np_, nt_;
  std::vector<double> iou_;
};

// Predictions of each category, by confidence descending then id ascending.
inline std::vector<std::size_t> prediction_order(const std::vector<PredInstance>& preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].confidence != preds[b].confidence) return preds[a].confidence > preds[b].confidence;
    return preds[a].id < preds[b].id;
  });
  return order;
}

inline MatchResult match_instances(const std::vector<PredInstance>& preds, const std::vector<TruthInstance>& truths,
                                   double phi, const IoUTable& table) {
  MatchResult r;
  r.threshold = phi;
  const auto order = prediction_order(preds);
  std::vector<bool> gt_used(truths.size(), false);
  for (auto i : order) {
    const auto& p = preds[i];
    auto& cm = r[p.category];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    bool cross_hit = false;
    for (std::size_t j = 0; j < truths.size(); ++j) {
      const double iou = table(i, j);
      if (truths[j].category != p.category) {
        cross_hit = cross_hit || iou >= phi;
        continue;
      }
      if (gt_used[j] || iou < phi) continue;
      if (iou > best_iou) {
        best_iou = iou;
        best = j;
      }
    }
    if (best) {
      gt_used[*best] = true;
      ++cm.tp;
      cm.pairs.push_back({p.id, truths[*best].id, best_iou});
      cm.pred_outcomes.emplace_back(p.id, true);
    } else {
      ++cm.fp;
      cm.pred_outcomes.emplace_back(p.id, false);
      if (cross_hit) ++cm.tn_diagnostic;
    }
  }
  for (std::size_t j = 0; j < truths.size(); ++j)
    if (!gt_used[j]) ++r[truths[j].category].fn;
  return r;
}

inline MatchResult match_instances(const std::vector<PredInstance>& preds, const std::vector<TruthInstance>& truths,
                                   double phi) {
  if (!(phi > 0.0 && phi <= 1.0)) throw ConfigError("match_instances: threshold must lie in (0, 1]");
  return match_instances(preds, truths, phi, IoUTable(preds, truths));
}

// Harmonic mean of mAP and mAR; 0 when both are 0.
inline double f1_from(double map, double mar) {
  const double s = map + mar;
  return s > 0.0 ? 2.0 * map * mar / s : 0.0;
}

enum class EvalMode { PaperLiteral, DatasetLevel };

inline std::string eval_mode_name(EvalMode m) { return m == EvalMode::PaperLiteral ? "paper" : "dataset"; }

inline EvalMode eval_mode_from_name(const std::string& s) {
  if (s == "paper") return EvalMode::PaperLiteral;
  if (s == "dataset") return EvalMode::DatasetLevel;
  throw ConfigError("unknown eval mode '" + s + "' (expected paper or dataset)");
}

struct MetricTriple {
  double map = 0.0;
  double mar = 0.0;
  double f1 = 0.0;
  bool defined = false;
};

struct EvalEntry {
  IoUThresholdSpec spec = IoUThresholdSpec::single(0.5);
  MetricTriple all;
  std::array<MetricTriple, 2> per_category;
};

struct EvalReport {
  EvalMode mode = EvalMode::PaperLiteral;
  std::size_t num_images = 0;
  std::vector<EvalEntry> entries;
};

namespace detail {

struct Cell {
  int tp = 0, fp = 0, fn = 0;
  bool skipped() const { return tp + fp == 0 && tp + fn == 0; }
  // Degenerate cells score 0 on the undefined side.
  double ap() const { return tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0; }
  double ar() const { return tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0; }
};

struct Accum {
  double sum_ap = 0.0, sum_ar = 0.0;
  int n = 0;
  void add(double ap, double ar) {
    sum_ap += ap;
    sum_ar += ar;
    ++n;
  }
  std::optional<std::pair<double, double>> mean() const {
    if (n == 0) return std::nullopt;
    return std::make_pair(sum_ap / n, sum_ar / n);
  }
};

// Per-image precision/recall averaged over categories, then over images.
inline std::array<std::optional<std::pair<double, double>>, 3> paper_literal_at(
    const std::vector<std::vector<MatchResult>>& matches, std::size_t t) {
  Accum overall;
  std::array<Accum, 2> cats;
  for (const auto& per_image : matches) {
    const auto& r = per_image[t];
    Accum image;
    for (auto c : kCategories) {
      const auto& cm = r[c];
      Cell cell{cm.tp, cm.fp, cm.fn};
      if (cell.skipped()) continue;
      image.add(cell.ap(), cell.ar());
      cats[category_id(c) - 1].add(cell.ap(), cell.ar());
    }
    if (auto m = image.mean()) overall.add(m->first, m->second);
  }
  return {overall.mean(), cats[0].mean(), cats[1].mean()};
}

struct ScoredOutcome {
  double confidence;
  std::int64_t image_id;
  std::int64_t pred_id;
  bool tp;
};

// COCO-style 101-point interpolated precision over all images pooled.
inline std::optional<std::pair<double, double>> coco_ap_ar(std::vector<ScoredOutcome> outcomes, int num_gt) {
  if (num_gt == 0) return std::nullopt;
  std::sort(outcomes.begin(), outcomes.end(), [](const ScoredOutcome& a, const ScoredOutcome& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return a.pred_id < b.pred_id;
  });
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& o : outcomes) {
    (o.tp ? tp : fp)++;
    precision.push_back(double(tp) / double(tp + fp));
    recall.push_back(double(tp) / double(num_gt));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = double(k) / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[std::size_t(it - recall.begin())];
  }
  const double max_recall = recall.empty() ? 0.0 : recall.back();
  return std::make_pair(sum / 101.0, max_recall);
}

inline std::array<std::optional<std::pair<double, double>>, 3> dataset_level_at(
    const std::vector<std::vector<MatchResult>>& matches, const std::vector<const ImageEval*>& images,
    std::size_t t) {
  std::array<std::optional<std::pair<double, double>>, 3> out;
  Accum overall;
  for (auto c : kCategories) {
    std::vector<ScoredOutcome> outcomes;
    int num_gt = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto& img = *images[i];
      const auto& cm = matches[i][t][c];
      num_gt += cm.tp + cm.fn;
      for (const auto& [pid, hit] : cm.pred_outcomes) {
        double conf = 0.0;
        for (const auto& p : img.preds)
          if (p.id == pid && p.category == c) conf = p.confidence;
        outcomes.push_back({conf, img.image_id, pid, hit});
      }
    }
    auto m = coco_ap_ar(std::move(outcomes), num_gt);
    out[std::size_t(category_id(c))] = m;
    if (m) overall.add(m->first, m->second);
  }
  out[0] = overall.mean();
  return out;
}

}  // namespace detail

// Evaluates a dataset at each threshold spec. Images are processed in image-id
// order so the report does not depend on input order; duplicate ids are rejected.
inline EvalReport evaluate(const std::vector<ImageEval>& dataset, const std::vector<IoUThresholdSpec>& specs,
                           EvalMode mode = EvalMode::PaperLiteral) {
  if (dataset.empty()) throw Error("evaluate: dataset is empty");
  std::vector<const ImageEval*> images;
  for (const auto& img : dataset) images.push_back(&img);
  std::sort(images.begin(), images.end(), [](auto* a, auto* b) { return a->image_id < b->image_id; });
  for (std::size_t i = 1; i < images.size(); ++i)
    if (images[i]->image_id == images[i - 1]->image_id)
      throw Error("evaluate: duplicate image id " + std::to_string(images[i]->image_id));

  std::vector<double> all_thresholds;
  for (const auto& s : specs)
    for (double t : s.thresholds())
      if (std::find(all_thresholds.begin(), all_thresholds.end(), t) == all_thresholds.end())
        all_thresholds.push_back(t);

  // matches[image][threshold index]
  std::vector<std::vector<MatchResult>> matches;
  for (const auto* img : images) {
    IoUTable table(img->preds, img->truths);
    auto& row = matches.emplace_back();
    for (double t : all_thresholds) row.push_back(match_instances(img->preds, img->truths, t, table));
  }

  EvalReport report;
  report.mode = mode;
  report.num_images = images.size();
  for (const auto& spec : specs) {
    EvalEntry entry{spec, {}, {}};
    std::array<detail::Accum, 3> acc;
    for (double t : spec.thresholds()) {
      const auto ti = std::size_t(std::find(all_thresholds.begin(), all_thresholds.end(), t) - all_thresholds.begin());
      const auto vals = mode == EvalMode::PaperLiteral ? detail::paper_literal_at(matches, ti)
                                                       : detail::dataset_level_at(matches, images, ti);
      for (std::size_t k = 0; k < 3; ++k)
        if (vals[k]) acc[k].add(vals[k]->first, vals[k]->second);
    }
    auto fill = [](MetricTriple& m, const detail::Accum& a) {
      if (auto v = a.mean()) {
        m = {v->first, v->second, f1_from(v->first, v->second), true};
      }
    };
    fill(entry.all, acc[0]);
    fill(entry.per_category[0], acc[1]);
    fill(entry.per_category[1], acc[2]);
    report.entries.push_back(entry);
  }
  return report;
}

inline EvalReport evaluate(const std::vector<ImageEval>& dataset, const IoUThresholdSpec& spec,
                           EvalMode mode = EvalMode::PaperLiteral) {
  return evaluate(dataset, std::vector<IoUThresholdSpec>{spec}, mode);
}

}  // namespace autoqc
