#pragma once

// In-memory forms of the prediction interchange files (detections.json,
// masks.json, prompts.json). Serialization lives in io.hpp.

#include <cstdint>
#include <vector>

#include "autoqc/geometry.hpp"
#include "autoqc/prompt.hpp"

namespace autoqc {

struct StoredDetection {
  std::int64_t image_id = 0;
  Detection detection;

  friend bool operator==(const StoredDetection&, const StoredDetection&) = default;
};

struct StoredMask {
  std::int64_t image_id = 0;
  std::int64_t prompt_source_id = 0;
  Category category = Category::CM;
  double score = 1.0;
  RleMask segmentation;

  friend bool operator==(const StoredMask&, const StoredMask&) = default;
};

struct PredictionStore {
  std::vector<StoredDetection> detections;
  std::vector<StoredMask> masks;

  std::vector<Detection> detections_for(std::int64_t image_id) const {
    std::vector<Detection> out;
    for (const auto& d : detections)
      if (d.image_id == image_id) out.push_back(d.detection);
    return out;
  }

  std::vector<const StoredMask*> masks_for(std::int64_t image_id) const {
    std::vector<const StoredMask*> out;
    for (const auto& m : masks)
      if (m.image_id == image_id) out.push_back(&m);
    return out;
  }
};

struct ImagePrompts {
  std::int64_t image_id = 0;
  std::vector<Prompt> prompts;

  friend bool operator==(const ImagePrompts&, const ImagePrompts&) = default;
};

}  // namespace autoqc
