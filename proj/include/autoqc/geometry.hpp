#pragma once

// Pixel-grid geometry. Convention: pixel (x, y) covers [x, x+1) x [y, y+1);
// boxes are in edge coordinates, so a single pixel at (3, 7) has box [3, 7, 4, 8].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "autoqc/error.hpp"

namespace autoqc {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min < x_max && y_min < y_max;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline Point2 box_centroid(const BoundingBox& b) {
  return {(b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0};
}

// Inclusive on all four edges.
inline bool box_contains(const BoundingBox& b, const Point2& p) {
  return b.x_min <= p.x && p.x <= b.x_max && b.y_min <= p.y && p.y <= b.y_max;
}

inline BoundingBox clamp_box(const BoundingBox& b, int width, int height) {
  return {std::clamp(b.x_min, 0.0, double(width)), std::clamp(b.y_min, 0.0, double(height)),
          std::clamp(b.x_max, 0.0, double(width)), std::clamp(b.y_max, 0.0, double(height))};
}

inline double box_iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// 16-bit grayscale image, row-major.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint16_t fill = 0)
      : GrayImage(width, height, std::vector<std::uint16_t>(checked_size(width, height), fill)) {}
  GrayImage(int width, int height, std::vector<std::uint16_t> samples)
      : width_(width), height_(height), samples_(std::move(samples)) {
    if (samples_.size() != checked_size(width, height))
      throw DimensionError("GrayImage: sample count does not match width x height");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint16_t operator()(int x, int y) const { return samples_[index(x, y)]; }
  std::uint16_t& operator()(int x, int y) { return samples_[index(x, y)]; }
  std::span<const std::uint16_t> samples() const { return samples_; }
  std::span<std::uint16_t> samples() { return samples_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  static std::size_t checked_size(int w, int h) {
    if (w <= 0 || h <= 0) throw DimensionError("GrayImage: width and height must be positive");
    return std::size_t(w) * std::size_t(h);
  }
  std::size_t index(int x, int y) const { return std::size_t(y) * std::size_t(width_) + std::size_t(x); }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint16_t> samples_;
};

// Binary occupancy mask, row-major, one byte per pixel (0 or 1).
class BitMask {
 public:
  BitMask() = default;
  BitMask(int width, int height) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw DimensionError("BitMask: negative dimensions");
    bits_.assign(std::size_t(width) * std::size_t(height), 0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool operator()(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }
  bool same_shape(const BitMask& o) const { return width_ == o.width_ && height_ == o.height_; }

  bool empty() const {
    return std::none_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; });
  }

  friend bool operator==(const BitMask&, const BitMask&) = default;

 private:
  std::size_t index(int x, int y) const { return std::size_t(y) * std::size_t(width_) + std::size_t(x); }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Uncompressed COCO-style RLE: column-major, alternating background/foreground
// runs, always starting with a (possibly zero) background run.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

inline std::int64_t mask_area_px(const BitMask& m) {
  std::int64_t n = 0;
  for (auto b : m.bits()) n += b != 0;
  return n;
}

namespace detail {

inline void require_same_shape(const BitMask& a, const BitMask& b, const char* what) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(what) + ": mask dimensions differ (" + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()) + ")");
}

inline double ratio_or_throw(std::int64_t inter, std::int64_t uni) {
  if (uni == 0) throw Error("mask_iou: both masks are empty");
  return double(inter) / double(uni);
}

}  // namespace detail

struct OverlapCounts {
  std::int64_t intersection = 0;
  std::int64_t union_ = 0;
};

inline OverlapCounts mask_overlap(const BitMask& a, const BitMask& b) {
  detail::require_same_shape(a, b, "mask_overlap");
  OverlapCounts c;
  auto ab = a.bits();
  auto bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    const bool x = ab[i] != 0;
    const bool y = bb[i] != 0;
    c.intersection += x && y;
    c.union_ += x || y;
  }
  return c;
}

inline double mask_iou(const BitMask& a, const BitMask& b) {
  const auto c = mask_overlap(a, b);
  return detail::ratio_or_throw(c.intersection, c.union_);
}

inline RleMask rle_encode(const BitMask& m) {
  RleMask r{m.width(), m.height(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < m.width(); ++x) {
    for (int y = 0; y < m.height(); ++y) {
      const std::uint8_t v = m(x, y) ? 1 : 0;
      if (v != current) {
        r.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  r.counts.push_back(run);
  return r;
}

inline void validate_rle(const RleMask& r) {
  if (r.width < 0 || r.height < 0) throw DimensionError("RLE: negative dimensions");
  std::uint64_t total = 0;
  for (auto c : r.counts) total += c;
  const std::uint64_t expected = std::uint64_t(r.width) * std::uint64_t(r.height);
  if (total != expected)
    throw Error("RLE: counts sum to " + std::to_string(total) + ", expected " + std::to_string(expected));
}

inline BitMask rle_decode(const RleMask& r) {
  validate_rle(r);
  BitMask m(r.width, r.height);
  std::uint64_t pos = 0;
  const auto h = std::uint64_t(r.height);
  for (std::size_t i = 0; i < r.counts.size(); ++i) {
    if (i % 2 == 1) {
      for (std::uint64_t k = pos; k < pos + r.counts[i]; ++k) m.set(int(k / h), int(k % h));
    }
    pos += r.counts[i];
  }
  return m;
}

inline std::int64_t rle_area(const RleMask& r) {
  std::int64_t n = 0;
  for (std::size_t i = 1; i < r.counts.size(); i += 2) n += r.counts[i];
  return n;
}

// Intersection/union computed by walking both run lists in lockstep.
inline OverlapCounts rle_overlap(const RleMask& a, const RleMask& b) {
  if (a.width != b.width || a.height != b.height) throw DimensionError("rle_overlap: mask dimensions differ");
  validate_rle(a);
  validate_rle(b);
  OverlapCounts c;
  std::size_t ia = 0, ib = 0;
  std::uint64_t left_a = a.counts.empty() ? 0 : a.counts[0];
  std::uint64_t left_b = b.counts.empty() ? 0 : b.counts[0];
  auto advance = [](const RleMask& r, std::size_t& i, std::uint64_t& left) {
    while (left == 0 && i + 1 < r.counts.size()) left = r.counts[++i];
  };
  advance(a, ia, left_a);
  advance(b, ib, left_b);
  while (left_a > 0 && left_b > 0) {
    const std::uint64_t step = std::min(left_a, left_b);
    const bool fa = ia % 2 == 1;
    const bool fb = ib % 2 == 1;
    if (fa && fb) c.intersection += std::int64_t(step);
    if (fa || fb) c.union_ += std::int64_t(step);
    left_a -= step;
    left_b -= step;
    advance(a, ia, left_a);
    advance(b, ib, left_b);
  }
  return c;
}

inline double rle_iou(const RleMask& a, const RleMask& b) {
  const auto c = rle_overlap(a, b);
  return detail::ratio_or_throw(c.intersection, c.union_);
}

// Integer pixel-edge box of all set pixels.
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

inline PixelBox mask_pixel_box(const BitMask& m) {
  PixelBox b{m.width(), m.height(), 0, 0};
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(x, y)) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x + 1);
        b.y1 = std::max(b.y1, y + 1);
      }
  if (b.empty()) return {};
  return b;
}

inline BoundingBox mask_tight_box(const BitMask& m) {
  const auto b = mask_pixel_box(m);
  if (b.empty()) throw Error("mask_tight_box: mask is empty");
  return {double(b.x0), double(b.y0), double(b.x1), double(b.y1)};
}

// Pixel whose unit square holds p, clamped into the image.
inline std::pair<int, int> point_to_pixel(const Point2& p, int width, int height) {
  const int x = std::clamp(int(std::floor(p.x)), 0, width - 1);
  const int y = std::clamp(int(std::floor(p.y)), 0, height - 1);
  return {x, y};
}

}  // namespace autoqc
