#pragma once

// Detector and promptable-segmenter contracts plus deterministic backends.
// No neural runtime lives here: real models run out of process and reach the
// pipeline through the file-backed backends.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autoqc/error.hpp"
#include "autoqc/geometry.hpp"
#include "autoqc/prompt.hpp"
#include "autoqc/rng.hpp"
#include "autoqc/store.hpp"

namespace autoqc {

// Ground-truth instance labels, row-major; 0 is background.
class LabelImage {
 public:
  LabelImage() = default;
  LabelImage(int width, int height) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw DimensionError("LabelImage: width and height must be positive");
    labels_.assign(std::size_t(width) * std::size_t(height), 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint32_t operator()(int x, int y) const { return labels_[index(x, y)]; }
  void set(int x, int y, std::uint32_t id) { labels_[index(x, y)] = id; }
  std::span<const std::uint32_t> labels() const { return labels_; }
  std::span<std::uint32_t> labels() { return labels_; }

  const std::map<std::uint32_t, Category>& categories() const { return categories_; }
  void set_category(std::uint32_t id, Category c) { categories_[id] = c; }
  Category category(std::uint32_t id) const {
    auto it = categories_.find(id);
    if (it == categories_.end()) throw Error("LabelImage: instance " + std::to_string(id) + " has no category");
    return it->second;
  }

  // Sorted ids of instances listed in the category map.
  std::vector<std::uint32_t> instance_ids() const {
    std::vector<std::uint32_t> ids;
    for (const auto& [id, c] : categories_) ids.push_back(id);
    return ids;
  }

  BitMask instance_mask(std::uint32_t id) const {
    BitMask m(width_, height_);
    auto bits = m.bits();
    for (std::size_t i = 0; i < labels_.size(); ++i) bits[i] = labels_[i] == id;
    return m;
  }

  // Every non-zero label has a category.
  void validate() const {
    for (auto l : labels_)
      if (l != 0 && !categories_.contains(l))
        throw Error("LabelImage: label " + std::to_string(l) + " missing from category map");
  }

  friend bool operator==(const LabelImage&, const LabelImage&) = default;

 private:
  std::size_t index(int x, int y) const { return std::size_t(y) * std::size_t(width_) + std::size_t(x); }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> labels_;
  std::map<std::uint32_t, Category> categories_;
};

struct DegradationSpec {
  int erode_px = 0;
  int dilate_px = 0;
  int shift_dx = 0;
  int shift_dy = 0;
  double flip_prob = 0.0;
  std::uint64_t seed = 0;

  bool is_identity() const {
    return erode_px == 0 && dilate_px == 0 && shift_dx == 0 && shift_dy == 0 && flip_prob == 0.0;
  }

  void validate() const {
    if (erode_px < 0 || dilate_px < 0) throw ConfigError("degradation: erode/dilate must be >= 0");
    if (erode_px > 0 && dilate_px > 0) throw ConfigError("degradation: at most one of erode/dilate may be non-zero");
    if (!(flip_prob >= 0.0 && flip_prob < 1.0)) throw ConfigError("degradation: flip_prob must lie in [0, 1)");
  }
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const GrayImage& image) const = 0;
};

// One mask per prompt, with the image's dimensions.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual BitMask segment(const GrayImage& image, const Prompt& prompt) const = 0;
};

// ---------------------------------------------------------------------------
// Morphology (4-connected; out-of-image pixels count as background)

inline BitMask shift_mask(const BitMask& m, int dx, int dy) {
  BitMask out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(x, y) && out.in_bounds(x + dx, y + dy)) out.set(x + dx, y + dy);
  return out;
}

inline BitMask erode4(const BitMask& m) {
  BitMask out(m.width(), m.height());
  auto on = [&](int x, int y) { return m.in_bounds(x, y) && m(x, y); };
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (on(x, y) && on(x - 1, y) && on(x + 1, y) && on(x, y - 1) && on(x, y + 1)) out.set(x, y);
  return out;
}

inline BitMask dilate4(const BitMask& m) {
  BitMask out(m.width(), m.height());
  auto on = [&](int x, int y) { return m.in_bounds(x, y) && m(x, y); };
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (on(x, y) || on(x - 1, y) || on(x + 1, y) || on(x, y - 1) || on(x, y + 1)) out.set(x, y);
  return out;
}

// Shift, then erode or dilate, then flip pixels independently with flip_prob.
// Throws when the result is empty.
inline BitMask degrade_mask(const BitMask& m, const DegradationSpec& spec) {
  spec.validate();
  BitMask out = (spec.shift_dx || spec.shift_dy) ? shift_mask(m, spec.shift_dx, spec.shift_dy) : m;
  for (int i = 0; i < spec.erode_px; ++i) out = erode4(out);
  for (int i = 0; i < spec.dilate_px; ++i) out = dilate4(out);
  if (spec.flip_prob > 0.0) {
    Rng rng(derive_seed(spec.seed, 0xF11Bu));
    for (auto& b : out.bits())
      if (rng.bernoulli(spec.flip_prob)) b = b ? 0 : 1;
  }
  if (out.empty()) throw Error("degrade_mask: degraded mask is empty");
  return out;
}

// ---------------------------------------------------------------------------
// Oracle backends

inline std::vector<Detection> oracle_detect(const LabelImage& truth,
                                            const std::optional<DegradationSpec>& jitter = std::nullopt) {
  std::map<std::uint32_t, PixelBox> boxes;
  for (int y = 0; y < truth.height(); ++y)
    for (int x = 0; x < truth.width(); ++x) {
      const auto id = truth(x, y);
      if (id == 0) continue;
      auto [it, fresh] = boxes.try_emplace(id, PixelBox{x, y, x + 1, y + 1});
      if (!fresh) {
        auto& b = it->second;
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x + 1);
        b.y1 = std::max(b.y1, y + 1);
      }
    }

  std::optional<Rng> rng;
  if (jitter) rng.emplace(derive_seed(jitter->seed, 0xDE7Eu));

  std::vector<Detection> out;
  for (auto id : truth.instance_ids()) {
    auto it = boxes.find(id);
    if (it == boxes.end()) continue;
    const auto& pb = it->second;
    Detection d;
    d.id = id;
    d.category = truth.category(id);
    d.box = {double(pb.x0), double(pb.y0), double(pb.x1), double(pb.y1)};
    if (jitter) {
      BoundingBox shifted{d.box.x_min + jitter->shift_dx, d.box.y_min + jitter->shift_dy,
                          d.box.x_max + jitter->shift_dx, d.box.y_max + jitter->shift_dy};
      shifted = clamp_box(shifted, truth.width(), truth.height());
      if (shifted.valid()) d.box = shifted;
      d.confidence = rng->uniform(0.5, 1.0);
    }
    out.push_back(d);
  }
  return out;
}

namespace detail {

// Pixels whose centres lie inside the (inclusive) box.
inline void clip_to_box(BitMask& m, const BoundingBox& b) {
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(x, y) && !box_contains(b, {x + 0.5, y + 0.5})) m.set(x, y, false);
}

inline std::uint32_t best_box_instance(const LabelImage& truth, const BoundingBox& box) {
  std::map<std::uint32_t, PixelBox> boxes;
  for (const auto& d : oracle_detect(truth))
    boxes[std::uint32_t(d.id)] = {int(d.box.x_min), int(d.box.y_min), int(d.box.x_max), int(d.box.y_max)};
  std::uint32_t best = 0;
  double best_iou = 0.0;
  for (const auto& [id, pb] : boxes) {
    const double iou = box_iou(box, {double(pb.x0), double(pb.y0), double(pb.x1), double(pb.y1)});
    if (iou > best_iou) {
      best_iou = iou;
      best = id;
    }
  }
  return best;
}

struct Selection {
  std::uint32_t target = 0;
  std::vector<std::uint32_t> excluded;
};

// Point priority: the positive point picks the instance; negatives name instances
// to cut away. A positive point on background falls back to the best box match.
inline Selection select_instance(const LabelImage& truth, const Prompt& prompt) {
  if (!prompt.box && prompt.points.empty()) throw Error("segment: prompt has neither box nor points");
  Selection sel;
  if (!prompt.points.empty()) {
    auto pos = std::find_if(prompt.points.begin(), prompt.points.end(), [](const auto& p) { return p.label == 1; });
    if (pos == prompt.points.end()) throw Error("segment: point prompt without a positive point");
    auto [px, py] = point_to_pixel(pos->point, truth.width(), truth.height());
    sel.target = truth(px, py);
    for (const auto& lp : prompt.points) {
      if (lp.label != 0) continue;
      auto [nx, ny] = point_to_pixel(lp.point, truth.width(), truth.height());
      const auto m = truth(nx, ny);
      if (m != 0) sel.excluded.push_back(m);
    }
  }
  if (sel.target == 0 && prompt.box) sel.target = best_box_instance(truth, *prompt.box);
  std::erase(sel.excluded, sel.target);
  return sel;
}

inline BitMask finish_mask(const LabelImage& truth, BitMask mask, const Selection& sel, const Prompt& prompt) {
  for (auto m : sel.excluded) {
    auto bits = mask.bits();
    auto labels = truth.labels();
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (labels[i] == m) bits[i] = 0;
  }
  if (prompt.box) clip_to_box(mask, *prompt.box);
  return mask;
}

}  // namespace detail

// Idealised segmenter with ground-truth access: the instance under the positive
// point, minus instances under negative points, clipped to the box. Returns an
// empty mask when no instance can be selected.
inline BitMask clip_segment(const LabelImage& truth, const Prompt& prompt) {
  const auto sel = detail::select_instance(truth, prompt);
  if (sel.target == 0) return BitMask(truth.width(), truth.height());
  return detail::finish_mask(truth, truth.instance_mask(sel.target), sel, prompt);
}

class OracleDetector final : public Detector {
 public:
  explicit OracleDetector(LabelImage truth, std::optional<DegradationSpec> jitter = std::nullopt)
      : truth_(std::move(truth)), jitter_(jitter) {}
  std::vector<Detection> detect(const GrayImage&) const override { return oracle_detect(truth_, jitter_); }

 private:
  LabelImage truth_;
  std::optional<DegradationSpec> jitter_;
};

class ClipSegmenter final : public Segmenter {
 public:
  explicit ClipSegmenter(LabelImage truth) : truth_(std::move(truth)) {}
  BitMask segment(const GrayImage&, const Prompt& prompt) const override { return clip_segment(truth_, prompt); }

 private:
  LabelImage truth_;
};

// Like ClipSegmenter, but the selected instance is degraded before negative
// points and the box are applied. With dilation this models a segmenter whose
// unconstrained output leaks into neighbours, which box prompts then cut back.
// The degradation seed is mixed with the prompt's source id, so output does not
// depend on call order.
class DegradedSegmenter final : public Segmenter {
 public:
  DegradedSegmenter(LabelImage truth, DegradationSpec spec) : truth_(std::move(truth)), spec_(spec) {
    spec_.validate();
  }

  BitMask segment(const GrayImage&, const Prompt& prompt) const override {
    const auto sel = detail::select_instance(truth_, prompt);
    if (sel.target == 0) return BitMask(truth_.width(), truth_.height());
    DegradationSpec s = spec_;
    s.seed = derive_seed(spec_.seed, std::uint64_t(prompt.source_id));
    BitMask raw;
    try {
      raw = degrade_mask(truth_.instance_mask(sel.target), s);
    } catch (const Error&) {
      return BitMask(truth_.width(), truth_.height());
    }
    return detail::finish_mask(truth_, std::move(raw), sel, prompt);
  }

 private:
  LabelImage truth_;
  DegradationSpec spec_;
};

// ---------------------------------------------------------------------------
// File-backed backends (predictions produced by an external model runner)

inline std::vector<Detection> file_detect(std::int64_t image_id, const PredictionStore& store) {
  auto out = store.detections_for(image_id);
  if (out.empty()) warn("no stored detections for image " + std::to_string(image_id));
  return out;
}

inline std::vector<StoredMask> file_segment(std::int64_t image_id, const PredictionStore& store) {
  std::vector<StoredMask> out;
  for (const auto* m : store.masks_for(image_id)) out.push_back(*m);
  if (out.empty()) warn("no stored masks for image " + std::to_string(image_id));
  return out;
}

class FileDetector final : public Detector {
 public:
  FileDetector(const PredictionStore& store, std::int64_t image_id) : store_(&store), image_id_(image_id) {}
  std::vector<Detection> detect(const GrayImage&) const override { return file_detect(image_id_, *store_); }

 private:
  const PredictionStore* store_;
  std::int64_t image_id_;
};

// Looks up the stored mask for (image, prompt source id).
class FileSegmenter final : public Segmenter {
 public:
  FileSegmenter(const PredictionStore& store, std::int64_t image_id) : store_(&store), image_id_(image_id) {}

  BitMask segment(const GrayImage& image, const Prompt& prompt) const override {
    for (const auto* m : store_->masks_for(image_id_)) {
      if (m->prompt_source_id != prompt.source_id) continue;
      if (m->segmentation.width != image.width() || m->segmentation.height != image.height())
        throw DimensionError("stored mask for image " + std::to_string(image_id_) + ", prompt " +
                             std::to_string(prompt.source_id) + " does not match image dimensions");
      return rle_decode(m->segmentation);
    }
    warn("no stored mask for image " + std::to_string(image_id_) + ", prompt " + std::to_string(prompt.source_id));
    return BitMask(image.width(), image.height());
  }

 private:
  const PredictionStore* store_;
  std::int64_t image_id_;
};

}  // namespace autoqc
