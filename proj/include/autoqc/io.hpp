#pragma once

// Interchange files: dataset.json (COCO-layout manifest), detections.json,
// masks.json, prompts.json, and 16-bit grayscale images (PNG or headerless raw
// with a JSON sidecar). Serialization is canonical: loading and re-saving a file
// written here reproduces it byte for byte.

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "autoqc/error.hpp"
#include "autoqc/geometry.hpp"
#include "autoqc/inference.hpp"
#include "autoqc/prompt.hpp"
#include "autoqc/store.hpp"

namespace autoqc::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw SchemaError(what + ": invalid JSON: " + e.what());
  }
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Schema helpers. Errors read like "annotations[3].bbox: expected array of 4 numbers".

class Record {
 public:
  Record(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("expected an object");
  }
  Record(Json&&, std::string) = delete;

  [[noreturn]] void fail(const std::string& msg) const { throw SchemaError(where_ + ": " + msg); }
  [[noreturn]] void fail(const char* field, const std::string& msg) const {
    throw SchemaError(where_ + "." + field + ": " + msg);
  }

  bool has(const char* field) const { return j_.contains(field) && !j_.at(field).is_null(); }

  const Json& get(const char* field) const {
    if (!j_.contains(field)) fail(field, "missing field");
    return j_.at(field);
  }

  std::int64_t integer(const char* field) const {
    const auto& v = get(field);
    if (!v.is_number_integer()) fail(field, "expected an integer");
    return v.get<std::int64_t>();
  }

  double number(const char* field) const {
    const auto& v = get(field);
    if (!v.is_number()) fail(field, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(field, "expected a finite number");
    return d;
  }

  std::string string(const char* field) const {
    const auto& v = get(field);
    if (!v.is_string()) fail(field, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* field, std::size_t n) const {
    const auto& v = get(field);
    if (!v.is_array() || v.size() != n) fail(field, "expected array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(field, "expected array of " + std::to_string(n) + " numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  const std::string& where() const { return where_; }

 private:
  const Json& j_;
  std::string where_;
};

inline const Json& require_array(const Json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  return j;
}

inline std::string at_index(const std::string& name, std::size_t i) { return name + "[" + std::to_string(i) + "]"; }

// ---------------------------------------------------------------------------
// RLE and polygons

inline Json rle_to_json(const RleMask& r) {
  Json j;
  j["size"] = {r.height, r.width};
  j["counts"] = r.counts;
  return j;
}

inline RleMask rle_from_json(const Record& rec, const char* field) {
  Record seg(rec.get(field), rec.where() + "." + field);
  const auto size = seg.numbers("size", 2);
  RleMask r;
  r.height = int(size[0]);
  r.width = int(size[1]);
  if (r.height < 0 || r.width < 0 || double(r.height) != size[0] || double(r.width) != size[1])
    seg.fail("size", "expected two non-negative integers [height, width]");
  const auto& counts = seg.get("counts");
  if (!counts.is_array()) seg.fail("counts", "expected an array of non-negative integers");
  for (const auto& c : counts) {
    if (!c.is_number_unsigned() && !(c.is_number_integer() && c.get<std::int64_t>() >= 0))
      seg.fail("counts", "expected an array of non-negative integers");
    r.counts.push_back(c.get<std::uint32_t>());
  }
  try {
    validate_rle(r);
  } catch (const Error& e) {
    seg.fail("counts", e.what());
  }
  return r;
}

// Even-odd rasterization: a pixel is set when its centre lies inside the polygon.
// Each polygon is a flat list x0, y0, x1, y1, ...; several polygons are XOR-ed.
inline BitMask rasterize_polygons(const std::vector<std::vector<double>>& polys, int width, int height) {
  BitMask m(width, height);
  for (const auto& poly : polys) {
    if (poly.size() < 6 || poly.size() % 2 != 0) throw SchemaError("polygon: need at least 3 (x, y) pairs");
    const std::size_t n = poly.size() / 2;
    std::vector<double> xs;
    for (int y = 0; y < height; ++y) {
      const double cy = y + 0.5;
      xs.clear();
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = poly[2 * i], yi = poly[2 * i + 1], xj = poly[2 * j], yj = poly[2 * j + 1];
        if ((yi > cy) != (yj > cy)) xs.push_back(xi + (cy - yi) * (xj - xi) / (yj - yi));
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        // pixel centres x + 0.5 strictly inside [xs[k], xs[k+1])
        const int x0 = std::max(0, int(std::ceil(xs[k] - 0.5)));
        const int x1 = std::min(width, int(std::ceil(xs[k + 1] - 0.5)));
        for (int x = x0; x < x1; ++x) m.set(x, y, !m(x, y));
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Dataset manifest

struct ManifestImage {
  std::int64_t id = 0;
  std::string file;
  int width = 0;
  int height = 0;
  double fov_width_um = 42.5;
  double fov_height_um = 42.5;

  friend bool operator==(const ManifestImage&, const ManifestImage&) = default;
};

struct ManifestAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  Category category = Category::CM;
  BoundingBox box;  // corner form; [x, y, w, h] on disk
  std::optional<RleMask> rle;
  std::vector<std::vector<double>> polygons;

  BitMask mask(int width, int height) const {
    if (rle) {
      if (rle->width != width || rle->height != height)
        throw DimensionError("annotation " + std::to_string(id) + ": segmentation size does not match its image");
      return rle_decode(*rle);
    }
    return rasterize_polygons(polygons, width, height);
  }

  friend bool operator==(const ManifestAnnotation&, const ManifestAnnotation&) = default;
};

struct DatasetManifest {
  std::vector<ManifestImage> images;
  std::vector<ManifestAnnotation> annotations;

  const ManifestImage* find_image(std::int64_t id) const {
    for (const auto& im : images)
      if (im.id == id) return &im;
    return nullptr;
  }

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline Json box_to_xywh(const BoundingBox& b) { return Json::array({b.x_min, b.y_min, b.width(), b.height()}); }

inline Json manifest_to_json(const DatasetManifest& m) {
  Json j;
  j["images"] = Json::array();
  for (const auto& im : m.images) {
    Json e;
    e["id"] = im.id;
    e["file"] = im.file;
    e["width"] = im.width;
    e["height"] = im.height;
    e["fov_um"] = {im.fov_width_um, im.fov_height_um};
    j["images"].push_back(e);
  }
  j["annotations"] = Json::array();
  for (const auto& a : m.annotations) {
    Json e;
    e["id"] = a.id;
    e["image_id"] = a.image_id;
    e["category_id"] = category_id(a.category);
    e["bbox"] = box_to_xywh(a.box);
    if (a.rle)
      e["segmentation"] = rle_to_json(*a.rle);
    else
      e["segmentation"] = a.polygons;
    j["annotations"].push_back(e);
  }
  j["categories"] = Json::array({Json{{"id", 1}, {"name", "CM"}}, Json{{"id", 2}, {"name", "CAP"}}});
  return j;
}

inline BoundingBox box_from_xywh(const Record& rec, const char* field) {
  const auto v = rec.numbers(field, 4);
  BoundingBox b{v[0], v[1], v[0] + v[2], v[1] + v[3]};
  if (!b.valid()) rec.fail(field, "width and height must be positive");
  return b;
}

inline DatasetManifest manifest_from_json(const Json& j) {
  Record root(j, "dataset");
  DatasetManifest m;

  const auto& cats = require_array(root.get("categories"), "dataset.categories");
  std::map<std::int64_t, std::string> cat_names;
  for (std::size_t i = 0; i < cats.size(); ++i) {
    Record c(cats[i], at_index("categories", i));
    cat_names[c.integer("id")] = c.string("name");
  }
  if (cat_names != std::map<std::int64_t, std::string>{{1, "CM"}, {2, "CAP"}})
    throw SchemaError("categories: expected exactly {1: CM, 2: CAP}");

  const auto& images = require_array(root.get("images"), "dataset.images");
  std::set<std::int64_t> image_ids;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Record r(images[i], at_index("images", i));
    ManifestImage im;
    im.id = r.integer("id");
    im.file = r.string("file");
    im.width = int(r.integer("width"));
    im.height = int(r.integer("height"));
    if (im.width <= 0) r.fail("width", "must be positive");
    if (im.height <= 0) r.fail("height", "must be positive");
    const auto fov = r.numbers("fov_um", 2);
    if (!(fov[0] > 0 && fov[1] > 0)) r.fail("fov_um", "must be positive");
    im.fov_width_um = fov[0];
    im.fov_height_um = fov[1];
    if (!image_ids.insert(im.id).second) r.fail("id", "duplicate image id " + std::to_string(im.id));
    m.images.push_back(im);
  }

  const auto& anns = require_array(root.get("annotations"), "dataset.annotations");
  std::set<std::int64_t> ann_ids;
  for (std::size_t i = 0; i < anns.size(); ++i) {
    Record r(anns[i], at_index("annotations", i));
    ManifestAnnotation a;
    a.id = r.integer("id");
    if (!ann_ids.insert(a.id).second) r.fail("id", "duplicate annotation id " + std::to_string(a.id));
    a.image_id = r.integer("image_id");
    const auto* im = m.find_image(a.image_id);
    if (!im)
      r.fail("image_id", "annotation " + std::to_string(a.id) + " references unknown image " +
                             std::to_string(a.image_id));
    const auto cat = r.integer("category_id");
    if (cat != 1 && cat != 2) r.fail("category_id", "expected 1 (CM) or 2 (CAP)");
    a.category = category_from_id(int(cat));
    a.box = box_from_xywh(r, "bbox");
    if (a.box.x_min < 0 || a.box.y_min < 0 || a.box.x_max > im->width || a.box.y_max > im->height)
      r.fail("bbox", "box lies outside its image");
    const auto& seg = r.get("segmentation");
    if (seg.is_object()) {
      a.rle = rle_from_json(r, "segmentation");
      if (a.rle->width != im->width || a.rle->height != im->height)
        r.fail("segmentation", "size does not match image " + std::to_string(im->id));
    } else if (seg.is_array()) {
      for (const auto& poly : seg) {
        if (!poly.is_array()) r.fail("segmentation", "expected polygon coordinate lists");
        std::vector<double> pts;
        for (const auto& v : poly) {
          if (!v.is_number()) r.fail("segmentation", "polygon coordinates must be numbers");
          pts.push_back(v.get<double>());
        }
        if (pts.size() < 6 || pts.size() % 2) r.fail("segmentation", "polygon needs at least 3 (x, y) pairs");
        a.polygons.push_back(std::move(pts));
      }
    } else {
      r.fail("segmentation", "expected an RLE object or a polygon list");
    }
    m.annotations.push_back(std::move(a));
  }
  return m;
}

// Warns where an annotation's bbox differs from its mask's tight box by > 1 px.
inline std::size_t check_manifest_boxes(const DatasetManifest& m) {
  std::size_t mismatches = 0;
  for (const auto& a : m.annotations) {
    const auto* im = m.find_image(a.image_id);
    const auto mask = a.mask(im->width, im->height);
    if (mask.empty()) {
      warn("annotation " + std::to_string(a.id) + ": empty segmentation");
      ++mismatches;
      continue;
    }
    const auto t = mask_tight_box(mask);
    if (std::abs(t.x_min - a.box.x_min) > 1 || std::abs(t.y_min - a.box.y_min) > 1 ||
        std::abs(t.x_max - a.box.x_max) > 1 || std::abs(t.y_max - a.box.y_max) > 1) {
      warn("annotation " + std::to_string(a.id) + ": bbox differs from segmentation extent by more than 1 px");
      ++mismatches;
    }
  }
  return mismatches;
}

inline DatasetManifest load_manifest(const fs::path& path) {
  return manifest_from_json(parse_json(read_text(path), path.string()));
}

inline void save_manifest(const fs::path& path, const DatasetManifest& m) {
  write_text(path, dump_json(manifest_to_json(m)));
}

// Ground-truth label image for one manifest image (annotation ids become labels;
// later annotations win where masks overlap).
inline LabelImage truth_from_manifest(const DatasetManifest& m, std::int64_t image_id) {
  const auto* im = m.find_image(image_id);
  if (!im) throw Error("unknown image id " + std::to_string(image_id));
  LabelImage truth(im->width, im->height);
  for (const auto& a : m.annotations) {
    if (a.image_id != image_id) continue;
    if (a.id <= 0 || a.id > std::int64_t(UINT32_MAX))
      throw SchemaError("annotation " + std::to_string(a.id) + ": id must be a positive 32-bit value");
    const auto mask = a.mask(im->width, im->height);
    const auto label = std::uint32_t(a.id);
    truth.set_category(label, a.category);
    for (int y = 0; y < im->height; ++y)
      for (int x = 0; x < im->width; ++x)
        if (mask(x, y)) truth.set(x, y, label);
  }
  return truth;
}

// ---------------------------------------------------------------------------
// Prediction stores

inline Json detections_to_json(const std::vector<StoredDetection>& dets) {
  Json j = Json::array();
  for (const auto& d : dets) {
    Json e;
    e["id"] = d.detection.id;
    e["image_id"] = d.image_id;
    e["category_id"] = category_id(d.detection.category);
    e["bbox"] = box_to_xywh(d.detection.box);
    e["score"] = d.detection.confidence;
    j.push_back(e);
  }
  return j;
}

// `id` is optional on input; missing ids are numbered per image in file order.
inline std::vector<StoredDetection> detections_from_json(const Json& j) {
  require_array(j, "detections");
  std::vector<StoredDetection> out;
  std::map<std::int64_t, std::int64_t> next_id;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (std::size_t i = 0; i < j.size(); ++i) {
    Record r(j[i], at_index("detections", i));
    StoredDetection d;
    d.image_id = r.integer("image_id");
    d.detection.id = r.has("id") ? r.integer("id") : next_id[d.image_id]++;
    if (!seen.insert({d.image_id, d.detection.id}).second)
      r.fail("id", "duplicate detection id " + std::to_string(d.detection.id) + " in image " +
                       std::to_string(d.image_id));
    const auto cat = r.integer("category_id");
    if (cat != 1 && cat != 2) r.fail("category_id", "expected 1 (CM) or 2 (CAP)");
    d.detection.category = category_from_id(int(cat));
    d.detection.box = box_from_xywh(r, "bbox");
    d.detection.confidence = r.number("score");
    if (d.detection.confidence < 0.0 || d.detection.confidence > 1.0) r.fail("score", "must lie in [0, 1]");
    out.push_back(d);
  }
  return out;
}

inline Json masks_to_json(const std::vector<StoredMask>& masks) {
  Json j = Json::array();
  for (const auto& m : masks) {
    Json e;
    e["image_id"] = m.image_id;
    e["prompt_source_id"] = m.prompt_source_id;
    e["category_id"] = category_id(m.category);
    e["score"] = m.score;
    e["segmentation"] = rle_to_json(m.segmentation);
    j.push_back(e);
  }
  return j;
}

// `score` is optional on input (default 1.0).
inline std::vector<StoredMask> masks_from_json(const Json& j) {
  require_array(j, "masks");
  std::vector<StoredMask> out;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (std::size_t i = 0; i < j.size(); ++i) {
    Record r(j[i], at_index("masks", i));
    StoredMask m;
    m.image_id = r.integer("image_id");
    m.prompt_source_id = r.integer("prompt_source_id");
    if (!seen.insert({m.image_id, m.prompt_source_id}).second)
      r.fail("prompt_source_id", "second mask for prompt " + std::to_string(m.prompt_source_id) + " in image " +
                                     std::to_string(m.image_id));
    const auto cat = r.integer("category_id");
    if (cat != 1 && cat != 2) r.fail("category_id", "expected 1 (CM) or 2 (CAP)");
    m.category = category_from_id(int(cat));
    if (r.has("score")) {
      m.score = r.number("score");
      if (m.score < 0.0 || m.score > 1.0) r.fail("score", "must lie in [0, 1]");
    }
    m.segmentation = rle_from_json(r, "segmentation");
    out.push_back(std::move(m));
  }
  return out;
}

inline Json prompts_to_json(const std::vector<ImagePrompts>& images) {
  Json j = Json::array();
  for (const auto& im : images) {
    Json e;
    e["image_id"] = im.image_id;
    e["prompts"] = Json::array();
    for (const auto& p : im.prompts) {
      Json pj;
      if (p.box)
        pj["box"] = {p.box->x_min, p.box->y_min, p.box->x_max, p.box->y_max};
      else
        pj["box"] = nullptr;
      pj["points"] = Json::array();
      for (const auto& lp : p.points) pj["points"].push_back({lp.point.x, lp.point.y, lp.label});
      pj["category"] = std::string(category_name(p.category));
      pj["source_id"] = p.source_id;
      pj["score"] = p.confidence;
      e["prompts"].push_back(pj);
    }
    j.push_back(e);
  }
  return j;
}

inline std::vector<ImagePrompts> prompts_from_json(const Json& j) {
  require_array(j, "prompts");
  std::vector<ImagePrompts> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    Record r(j[i], at_index("prompts", i));
    ImagePrompts im;
    im.image_id = r.integer("image_id");
    const auto& list = r.get("prompts");
    require_array(list, r.where() + ".prompts");
    for (std::size_t k = 0; k < list.size(); ++k) {
      Record pr(list[k], r.where() + "." + at_index("prompts", k));
      Prompt p;
      if (pr.has("box")) {
        const auto b = pr.numbers("box", 4);
        p.box = BoundingBox{b[0], b[1], b[2], b[3]};
        if (!p.box->valid()) pr.fail("box", "expected [x_min, y_min, x_max, y_max] with min < max");
      }
      const auto& pts = pr.get("points");
      if (!pts.is_array()) pr.fail("points", "expected an array of [x, y, label]");
      for (const auto& pt : pts) {
        if (!pt.is_array() || pt.size() != 3 || !pt[0].is_number() || !pt[1].is_number() ||
            !pt[2].is_number_integer())
          pr.fail("points", "expected an array of [x, y, label]");
        const int label = pt[2].get<int>();
        if (label != 0 && label != 1) pr.fail("points", "labels must be 0 or 1");
        p.points.push_back({{pt[0].get<double>(), pt[1].get<double>()}, label});
      }
      try {
        p.category = category_from_name(pr.string("category"));
      } catch (const SchemaError&) {
        pr.fail("category", "expected \"CM\" or \"CAP\"");
      }
      p.source_id = pr.integer("source_id");
      if (pr.has("score")) p.confidence = pr.number("score");
      im.prompts.push_back(std::move(p));
    }
    out.push_back(std::move(im));
  }
  return out;
}

inline std::vector<StoredDetection> load_detections(const fs::path& p) {
  return detections_from_json(parse_json(read_text(p), p.string()));
}
inline void save_detections(const fs::path& p, const std::vector<StoredDetection>& d) {
  write_text(p, dump_json(detections_to_json(d)));
}
inline std::vector<StoredMask> load_masks(const fs::path& p) { return masks_from_json(parse_json(read_text(p), p.string())); }
inline void save_masks(const fs::path& p, const std::vector<StoredMask>& m) { write_text(p, dump_json(masks_to_json(m))); }
inline std::vector<ImagePrompts> load_prompts(const fs::path& p) {
  return prompts_from_json(parse_json(read_text(p), p.string()));
}
inline void save_prompts(const fs::path& p, const std::vector<ImagePrompts>& v) {
  write_text(p, dump_json(prompts_to_json(v)));
}

// ---------------------------------------------------------------------------
// Images

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

inline void write_png16(const fs::path& path, const GrayImage& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  std::vector<std::uint8_t> row(std::size_t(img.width()) * 2);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG write failed for '" + path.string() + "': " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, png_uint_32(img.width()), png_uint_32(img.height()), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto v = img(x, y);
      row[std::size_t(x) * 2] = std::uint8_t(v >> 8);
      row[std::size_t(x) * 2 + 1] = std::uint8_t(v & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads a single-channel PNG; 8-bit images are scaled to 16 bits.
inline GrayImage read_png16(const fs::path& path) {
  detail::FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw Error("cannot open '" + path.string() + "' for reading");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  GrayImage img;
  std::vector<std::uint8_t> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("PNG read failed for '" + path.string() + "': " + err);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("'" + path.string() + "' is not a single-channel grayscale PNG");
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  img = GrayImage(int(w), int(h));
  row.resize(png_get_rowbytes(png, info));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      std::uint16_t v;
      if (out_depth == 16)
        v = std::uint16_t((row[x * 2] << 8) | row[x * 2 + 1]);
      else
        v = std::uint16_t(row[x] * 257);
      img(int(x), int(y)) = v;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// Headerless little-endian uint16 samples plus `<file>.json` holding the size.
inline void write_raw16(const fs::path& path, const GrayImage& img) {
  std::string bytes;
  bytes.reserve(img.samples().size() * 2);
  for (auto v : img.samples()) {
    bytes.push_back(char(v & 0xFF));
    bytes.push_back(char(v >> 8));
  }
  write_text(path, bytes);
  Json side;
  side["width"] = img.width();
  side["height"] = img.height();
  side["dtype"] = "uint16le";
  write_text(fs::path(path.string() + ".json"), dump_json(side));
}

inline GrayImage read_raw16(const fs::path& path) {
  const fs::path side_path(path.string() + ".json");
  const Json side_json = parse_json(read_text(side_path), side_path.string());
  Record side(side_json, side_path.string());
  const auto w = side.integer("width"), h = side.integer("height");
  if (side.string("dtype") != "uint16le") side.fail("dtype", "only uint16le is supported");
  if (w <= 0 || h <= 0) side.fail("width", "dimensions must be positive");
  const auto bytes = read_text(path);
  if (bytes.size() != std::size_t(w) * std::size_t(h) * 2)
    throw Error("'" + path.string() + "': size does not match sidecar dimensions");
  std::vector<std::uint16_t> samples(std::size_t(w) * std::size_t(h));
  for (std::size_t i = 0; i < samples.size(); ++i)
    samples[i] = std::uint16_t(std::uint8_t(bytes[2 * i]) | (std::uint8_t(bytes[2 * i + 1]) << 8));
  return GrayImage(int(w), int(h), std::move(samples));
}

inline GrayImage read_image(const fs::path& path) {
  return path.extension() == ".raw" ? read_raw16(path) : read_png16(path);
}

inline void write_image(const fs::path& path, const GrayImage& img) {
  if (path.extension() == ".raw")
    write_raw16(path, img);
  else
    write_png16(path, img);
}

}  // namespace autoqc::io
