#pragma once

// Capillarization measurements per image (counts, areas, CDFA, CDCA, CCR) and
// relative assessment errors against ground truth.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "autoqc/error.hpp"
#include "autoqc/geometry.hpp"
#include "autoqc/prompt.hpp"

namespace autoqc {

struct FovSpec {
  double fov_width_um = 42.5;
  double fov_height_um = 42.5;
  int width_px = 512;
  int height_px = 512;

  void validate() const {
    if (!(fov_width_um > 0.0 && fov_height_um > 0.0) || width_px <= 0 || height_px <= 0)
      throw ConfigError("FOV: dimensions must be positive");
    if (std::abs(fov_width_um / width_px - fov_height_um / height_px) > 1e-9)
      throw ConfigError("FOV: pixels must be square");
  }
  double pixel_size_um() const { return fov_width_um / width_px; }
  double pixel_area_um2() const { return pixel_size_um() * pixel_size_um(); }
  double area_um2() const { return fov_width_um * fov_height_um; }
};

struct CategorizedMask {
  BitMask mask;
  Category category = Category::CM;
};

enum class AreaRule {
  PerInstance,  // overlapping pixels count once per instance
  Union,        // overlapping pixels of the same category count once
};

struct CapillarizationReport {
  std::int64_t cm_count = 0;
  std::int64_t cap_count = 0;
  double cm_area_um2 = 0.0;
  double cap_area_um2 = 0.0;
  double cdfa_per_um2 = 0.0;
  std::optional<double> cdca_per_um2;
  std::optional<double> ccr;

  friend bool operator==(const CapillarizationReport&, const CapillarizationReport&) = default;
};

inline CapillarizationReport measure(const std::vector<CategorizedMask>& masks, const FovSpec& fov,
                                     AreaRule rule = AreaRule::PerInstance) {
  fov.validate();
  CapillarizationReport r;
  std::int64_t cm_px = 0, cap_px = 0;
  std::array<std::vector<std::uint8_t>, 2> unions;
  const auto npx = std::size_t(fov.width_px) * std::size_t(fov.height_px);
  for (const auto& m : masks) {
    if (m.mask.width() != fov.width_px || m.mask.height() != fov.height_px)
      throw DimensionError("measure: mask is " + std::to_string(m.mask.width()) + "x" +
                           std::to_string(m.mask.height()) + ", FOV is " + std::to_string(fov.width_px) + "x" +
                           std::to_string(fov.height_px));
    const bool is_cm = m.category == Category::CM;
    (is_cm ? r.cm_count : r.cap_count)++;
    if (rule == AreaRule::PerInstance) {
      (is_cm ? cm_px : cap_px) += mask_area_px(m.mask);
    } else {
      auto& u = unions[is_cm ? 0 : 1];
      if (u.empty()) u.assign(npx, 0);
      auto bits = m.mask.bits();
      for (std::size_t i = 0; i < npx; ++i) u[i] |= bits[i];
    }
  }
  if (rule == AreaRule::Union) {
    for (auto b : unions[0]) cm_px += b;
    for (auto b : unions[1]) cap_px += b;
  }
  r.cm_area_um2 = double(cm_px) * fov.pixel_area_um2();
  r.cap_area_um2 = double(cap_px) * fov.pixel_area_um2();
  r.cdfa_per_um2 = double(r.cap_count) / fov.area_um2();
  if (r.cm_area_um2 > 0.0)
    r.cdca_per_um2 = double(r.cap_count) / r.cm_area_um2;
  else
    warn("measure: total CM area is zero, CDCA undefined");
  if (r.cm_count > 0)
    r.ccr = double(r.cap_count) / double(r.cm_count);
  else
    warn("measure: no CM masks, CCR undefined");
  return r;
}

enum class Measurement { CmCount, CapCount, CmArea, CapArea, Cdfa, Cdca, Ccr };

inline constexpr std::array<Measurement, 7> kMeasurements = {Measurement::CmCount, Measurement::CapCount,
                                                             Measurement::CmArea,  Measurement::CapArea,
                                                             Measurement::Cdfa,    Measurement::Cdca,
                                                             Measurement::Ccr};

inline std::string measurement_name(Measurement m) {
  switch (m) {
    case Measurement::CmCount: return "cm_count";
    case Measurement::CapCount: return "cap_count";
    case Measurement::CmArea: return "cm_area_um2";
    case Measurement::CapArea: return "cap_area_um2";
    case Measurement::Cdfa: return "cdfa";
    case Measurement::Cdca: return "cdca";
    case Measurement::Ccr: return "ccr";
  }
  return "?";
}

inline std::optional<double> measurement_value(const CapillarizationReport& r, Measurement m) {
  switch (m) {
    case Measurement::CmCount: return double(r.cm_count);
    case Measurement::CapCount: return double(r.cap_count);
    case Measurement::CmArea: return r.cm_area_um2;
    case Measurement::CapArea: return r.cap_area_um2;
    case Measurement::Cdfa: return r.cdfa_per_um2;
    case Measurement::Cdca: return r.cdca_per_um2;
    case Measurement::Ccr: return r.ccr;
  }
  return std::nullopt;
}

// Signed relative error per measurement; absent when the truth is 0 or undefined.
struct AssessmentError {
  std::array<std::optional<double>, 7> delta;

  const std::optional<double>& operator[](Measurement m) const { return delta[std::size_t(m)]; }
};

inline AssessmentError assess(const CapillarizationReport& pred, const CapillarizationReport& truth) {
  AssessmentError e;
  for (auto m : kMeasurements) {
    const auto p = measurement_value(pred, m);
    const auto t = measurement_value(truth, m);
    if (p && t && *t != 0.0) e.delta[std::size_t(m)] = (*p - *t) / *t;
  }
  return e;
}

enum class Reduction { MeanAbs, MeanSigned };

inline Reduction reduction_from_name(const std::string& s) {
  if (s == "mean_abs") return Reduction::MeanAbs;
  if (s == "mean_signed") return Reduction::MeanSigned;
  throw ConfigError("unknown reduction '" + s + "' (expected mean_abs or mean_signed)");
}

struct ErrorSummary {
  std::optional<double> mean;
  std::optional<double> sd;  // sample SD; needs >= 2 defined values
  std::size_t used = 0;
  std::size_t excluded = 0;
};

inline std::array<ErrorSummary, 7> aggregate_errors(const std::vector<AssessmentError>& errors,
                                                    Reduction reduction = Reduction::MeanAbs) {
  if (errors.empty()) throw Error("aggregate_errors: no images");
  std::array<ErrorSummary, 7> out;
  for (auto m : kMeasurements) {
    auto& s = out[std::size_t(m)];
    std::vector<double> vals;
    for (const auto& e : errors) {
      if (const auto& d = e[m]) {
        vals.push_back(reduction == Reduction::MeanAbs ? std::abs(*d) : *d);
      } else {
        ++s.excluded;
      }
    }
    s.used = vals.size();
    if (vals.empty()) {
      warn("aggregate_errors: " + measurement_name(m) + " undefined on every image");
      continue;
    }
    double sum = 0.0;
    for (double v : vals) sum += v;
    const double mean = sum / double(vals.size());
    s.mean = mean;
    if (vals.size() >= 2) {
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      s.sd = std::sqrt(ss / double(vals.size() - 1));
    }
  }
  return out;
}

}  // namespace autoqc
