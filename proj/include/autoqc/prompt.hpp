#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "autoqc/error.hpp"
#include "autoqc/geometry.hpp"

namespace autoqc {

enum class Category : std::uint8_t { CM = 1, Capillary = 2 };

inline constexpr Category kCategories[] = {Category::CM, Category::Capillary};

inline int category_id(Category c) { return static_cast<int>(c); }

inline Category category_from_id(int id) {
  if (id == 1) return Category::CM;
  if (id == 2) return Category::Capillary;
  throw SchemaError("unknown category id " + std::to_string(id));
}

inline std::string_view category_name(Category c) { return c == Category::CM ? "CM" : "CAP"; }

inline Category category_from_name(std::string_view s) {
  if (s == "CM") return Category::CM;
  if (s == "CAP") return Category::Capillary;
  throw SchemaError("unknown category name '" + std::string(s) + "'");
}

struct Detection {
  BoundingBox box;
  Category category = Category::CM;
  double confidence = 1.0;
  std::int64_t id = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct LabeledPoint {
  Point2 point;
  int label = 0;  // 1 = target object, 0 = neighbour to exclude

  friend bool operator==(const LabeledPoint&, const LabeledPoint&) = default;
};

enum class PromptMode { PointsOnly, BoxOnly, BoxAndPoints };

inline std::string_view prompt_mode_name(PromptMode m) {
  switch (m) {
    case PromptMode::PointsOnly: return "points";
    case PromptMode::BoxOnly: return "box";
    case PromptMode::BoxAndPoints: return "box+points";
  }
  return "?";
}

inline PromptMode prompt_mode_from_name(std::string_view s) {
  if (s == "points") return PromptMode::PointsOnly;
  if (s == "box") return PromptMode::BoxOnly;
  if (s == "box+points") return PromptMode::BoxAndPoints;
  throw ConfigError("unknown prompt mode '" + std::string(s) + "' (expected points, box, or box+points)");
}

struct Prompt {
  std::optional<BoundingBox> box;
  std::vector<LabeledPoint> points;
  Category category = Category::CM;
  double confidence = 1.0;
  std::int64_t source_id = 0;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

// One prompt per detection, in input order. For detection i the point set holds
// every detection centroid that falls inside box i: its own centroid labelled 1
// (first), then the others labelled 0 in detection order. Traversal ignores
// category, so capillary centroids become negatives of an enclosing CM prompt.
inline std::vector<Prompt> generate_prompts(const std::vector<Detection>& detections, PromptMode mode) {
  std::unordered_set<std::int64_t> seen;
  for (const auto& d : detections) {
    if (!seen.insert(d.id).second) throw Error("generate_prompts: duplicate detection id " + std::to_string(d.id));
    if (!d.box.valid()) throw Error("generate_prompts: invalid box for detection " + std::to_string(d.id));
  }

  std::vector<Point2> centroids;
  centroids.reserve(detections.size());
  for (const auto& d : detections) centroids.push_back(box_centroid(d.box));

  const bool with_points = mode != PromptMode::BoxOnly;
  const bool with_box = mode != PromptMode::PointsOnly;

  std::vector<Prompt> prompts;
  prompts.reserve(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    Prompt p;
    p.category = d.category;
    p.confidence = d.confidence;
    p.source_id = d.id;
    if (with_box) p.box = d.box;
    if (with_points) {
      p.points.push_back({centroids[i], 1});
      for (std::size_t j = 0; j < detections.size(); ++j)
        if (j != i && box_contains(d.box, centroids[j])) p.points.push_back({centroids[j], 0});
    }
    prompts.push_back(std::move(p));
  }
  return prompts;
}

struct PromptStats {
  std::vector<std::size_t> negatives_per_prompt;
  double fraction_with_negative = 0.0;
  std::size_t total_negatives = 0;
};

inline PromptStats prompt_stats(const std::vector<Prompt>& prompts) {
  PromptStats s;
  std::size_t with_neg = 0;
  for (const auto& p : prompts) {
    std::size_t n = 0;
    for (const auto& lp : p.points) n += lp.label == 0;
    s.negatives_per_prompt.push_back(n);
    s.total_negatives += n;
    with_neg += n > 0;
  }
  if (!prompts.empty()) s.fraction_with_negative = double(with_neg) / double(prompts.size());
  return s;
}

}  // namespace autoqc
