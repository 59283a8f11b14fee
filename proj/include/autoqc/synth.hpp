#pragma once

// Synthetic myocardium cross-sections with exact ground truth.
//
// Cardiomyocytes are cells of a Lloyd-relaxed Voronoi tiling separated by bright
// membranes; capillaries are small elliptical lumens with bright rims placed at
// cell junctions. All geometry is integer arithmetic on a 1/256-pixel grid and
// all randomness comes from Rng (rng.hpp), so scenes are bit-identical for a
// given seed on every platform.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "autoqc/error.hpp"
#include "autoqc/geometry.hpp"
#include "autoqc/inference.hpp"
#include "autoqc/prompt.hpp"
#include "autoqc/rng.hpp"

namespace autoqc {

struct IntensityModel {
  std::uint16_t membrane_level = 40000;
  std::uint16_t interior_level = 9000;
  double noise_sd = 1500.0;
};

struct SceneSpec {
  int width = 256;
  int height = 256;
  int cm_count_min = 6;
  int cm_count_max = 10;
  int capillaries_per_cm_min = 2;
  int capillaries_per_cm_max = 4;
  int membrane_thickness_px = 3;
  int relaxation_iters = 5;
  double capillary_radius_min_px = 3.0;
  double capillary_radius_max_px = 5.0;
  int capillary_rim_px = 1;
  std::uint64_t seed = 0;
  IntensityModel intensity;

  void validate() const {
    if (width <= 0 || height <= 0) throw ConfigError("scene: width and height must be positive");
    if (cm_count_min < 1 || cm_count_max < cm_count_min) throw ConfigError("scene: invalid CM count range");
    if (capillaries_per_cm_min < 0 || capillaries_per_cm_max < capillaries_per_cm_min)
      throw ConfigError("scene: invalid capillaries-per-CM range");
    if (membrane_thickness_px < 1) throw ConfigError("scene: membrane thickness must be >= 1");
    if (relaxation_iters < 0) throw ConfigError("scene: relaxation iterations must be >= 0");
    if (!(capillary_radius_min_px >= 1.0 && capillary_radius_max_px >= capillary_radius_min_px))
      throw ConfigError("scene: invalid capillary radius range");
    if (capillary_rim_px < 0) throw ConfigError("scene: capillary rim must be >= 0");
    if (intensity.noise_sd < 0.0) throw ConfigError("scene: noise_sd must be >= 0");
  }
};

struct Annotation {
  std::int64_t id = 0;
  Category category = Category::CM;
  BoundingBox box;
  BitMask mask;
};

struct SyntheticScene {
  GrayImage image;
  LabelImage truth;
  std::vector<Annotation> annotations;
};

// Ground-truth annotations in instance-id order.
inline std::vector<Annotation> annotations_from_truth(const LabelImage& truth) {
  std::vector<Annotation> out;
  for (auto id : truth.instance_ids()) {
    auto mask = truth.instance_mask(id);
    if (mask.empty()) continue;
    out.push_back({id, truth.category(id), mask_tight_box(mask), std::move(mask)});
  }
  return out;
}

namespace synth_detail {

constexpr std::int64_t kSub = 256;  // sub-pixel grid

struct Site {
  std::int64_t x, y;  // 1/256 px
};

inline std::int64_t centre(int p) { return std::int64_t(p) * kSub + kSub / 2; }

inline std::vector<std::int32_t> assign_cells(const std::vector<Site>& sites, int w, int h) {
  std::vector<std::int32_t> cell(std::size_t(w) * std::size_t(h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::int64_t best = INT64_MAX;
      std::int32_t arg = 0;
      for (std::size_t s = 0; s < sites.size(); ++s) {
        const std::int64_t dx = centre(x) - sites[s].x, dy = centre(y) - sites[s].y;
        const std::int64_t d = dx * dx + dy * dy;
        if (d < best) {
          best = d;
          arg = std::int32_t(s);
        }
      }
      cell[std::size_t(y) * std::size_t(w) + std::size_t(x)] = arg;
    }
  return cell;
}

inline std::int64_t round_div(std::int64_t num, std::int64_t den) { return (2 * num + den) / (2 * den); }

// Keeps the largest 4-connected component of each label (ties: first found in
// raster order); other pixels of that label become 0.
inline void keep_largest_components(std::vector<std::uint32_t>& labels, int w, int h) {
  std::vector<std::int32_t> comp(labels.size(), -1);
  std::vector<std::size_t> sizes;
  std::vector<std::uint32_t> comp_label;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < labels.size(); ++start) {
    if (labels[start] == 0 || comp[start] >= 0) continue;
    const auto id = std::int32_t(sizes.size());
    const auto lab = labels[start];
    std::size_t n = 0;
    stack.push_back(start);
    comp[start] = id;
    while (!stack.empty()) {
      const auto p = stack.back();
      stack.pop_back();
      ++n;
      const int x = int(p % std::size_t(w)), y = int(p / std::size_t(w));
      const std::array<std::pair<int, int>, 4> nb{{{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
      for (auto [nx, ny] : nb) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const auto q = std::size_t(ny) * std::size_t(w) + std::size_t(nx);
        if (labels[q] == lab && comp[q] < 0) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
    sizes.push_back(n);
    comp_label.push_back(lab);
  }
  std::vector<std::int32_t> best_comp;
  std::vector<std::size_t> best_size;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const auto lab = comp_label[c];
    if (best_comp.size() <= lab) {
      best_comp.resize(lab + 1, -1);
      best_size.resize(lab + 1, 0);
    }
    if (sizes[c] > best_size[lab]) {
      best_size[lab] = sizes[c];
      best_comp[lab] = std::int32_t(c);
    }
  }
  for (std::size_t p = 0; p < labels.size(); ++p)
    if (labels[p] != 0 && comp[p] != best_comp[labels[p]]) labels[p] = 0;
}

struct Ellipse {
  std::int64_t cx, cy, a, b;  // 1/256 px

  bool contains(int x, int y, std::int64_t grow) const {
    const std::int64_t ga = a + grow, gb = b + grow;
    const std::int64_t dx = centre(x) - cx, dy = centre(y) - cy;
    return dx * dx * gb * gb + dy * dy * ga * ga <= ga * ga * gb * gb;
  }
};

}  // namespace synth_detail

namespace synth_detail {

// One layout attempt; returns false when capillary placement or a scene
// invariant fails (caller retries with a fresh sub-seed).
inline bool try_generate(const SceneSpec& spec, std::uint64_t seed, SyntheticScene& out) {
  const int w = spec.width, h = spec.height;
  const std::size_t npx = std::size_t(w) * std::size_t(h);
  auto at = [w](int x, int y) { return std::size_t(y) * std::size_t(w) + std::size_t(x); };
  Rng rng(seed);

  const int n_cells = int(rng.uniform_int(spec.cm_count_min, spec.cm_count_max));
  std::vector<Site> sites(static_cast<std::size_t>(n_cells));
  for (auto& s : sites) {
    s.x = rng.uniform_int(0, std::int64_t(w) * kSub - 1);
    s.y = rng.uniform_int(0, std::int64_t(h) * kSub - 1);
  }

  std::vector<std::int32_t> cell;
  for (int it = 0; it < spec.relaxation_iters; ++it) {
    cell = assign_cells(sites, w, h);
    std::vector<std::int64_t> sx(sites.size(), 0), sy(sites.size(), 0), cnt(sites.size(), 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto c = std::size_t(cell[at(x, y)]);
        sx[c] += centre(x);
        sy[c] += centre(y);
        ++cnt[c];
      }
    for (std::size_t s = 0; s < sites.size(); ++s)
      if (cnt[s] > 0) sites[s] = {round_div(sx[s], cnt[s]), round_div(sy[s], cnt[s])};
  }
  cell = assign_cells(sites, w, h);

  // Membranes: each cell boundary gets thickness t, split ceil/floor between the
  // higher- and lower-index side; the image border gets max(1, t/2).
  const int t = spec.membrane_thickness_px;
  const int h_hi = (t + 1) / 2, h_lo = t / 2, h_border = std::max(1, t / 2);
  const int reach = std::max(h_hi, h_border);
  std::vector<std::uint32_t> labels(npx, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto a = cell[at(x, y)];
      bool membrane = false;
      for (int dy = -reach; dy <= reach && !membrane; ++dy)
        for (int dx = -reach; dx <= reach && !membrane; ++dx) {
          const int d = std::max(std::abs(dx), std::abs(dy));
          const int qx = x + dx, qy = y + dy;
          if (qx < 0 || qy < 0 || qx >= w || qy >= h) {
            membrane = d <= h_border;
            continue;
          }
          const auto b = cell[at(qx, qy)];
          if (b != a) membrane = d <= (b < a ? h_hi : h_lo);
        }
      if (!membrane) labels[at(x, y)] = std::uint32_t(a) + 1;
    }
  keep_largest_components(labels, w, h);

  // Junction candidates per cell: membrane pixels whose neighbourhood touches
  // three or more distinct cells.
  const int jr = t + 1;
  std::vector<std::vector<std::size_t>> junctions(sites.size()), borders(sites.size());
  for (int y = jr; y < h - jr; ++y)
    for (int x = jr; x < w - jr; ++x) {
      if (labels[at(x, y)] != 0) continue;
      std::set<std::int32_t> seen;
      for (int dy = -jr; dy <= jr; ++dy)
        for (int dx = -jr; dx <= jr; ++dx) seen.insert(cell[at(x + dx, y + dy)]);
      for (auto c : seen) (seen.size() >= 3 ? junctions : borders)[std::size_t(c)].push_back(at(x, y));
    }

  const auto rmin = std::int64_t(std::llround(spec.capillary_radius_min_px * kSub));
  const auto rmax = std::int64_t(std::llround(spec.capillary_radius_max_px * kSub));
  const std::int64_t rim = std::int64_t(spec.capillary_rim_px) * kSub;
  std::vector<Ellipse> caps;
  std::vector<std::uint8_t> occupied(npx, 0);  // lumen + rim + 1 px gap of placed capillaries

  for (std::size_t c = 0; c < sites.size(); ++c) {
    const auto k = rng.uniform_int(spec.capillaries_per_cm_min, spec.capillaries_per_cm_max);
    for (std::int64_t j = 0; j < k; ++j) {
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        const auto& pool = (attempt < 150 && !junctions[c].empty()) ? junctions[c] : borders[c];
        if (pool.empty()) break;
        const auto p = pool[std::size_t(rng.uniform_int(0, std::int64_t(pool.size()) - 1))];
        const int px = int(p % std::size_t(w)), py = int(p / std::size_t(w));
        Ellipse e{centre(px) + rng.uniform_int(-kSub / 4, kSub / 4), centre(py) + rng.uniform_int(-kSub / 4, kSub / 4),
                  rng.uniform_int(rmin, rmax), rng.uniform_int(rmin, rmax)};
        const std::int64_t outer = std::max(e.a, e.b) + rim + kSub;
        const int x0 = int((e.cx - outer) / kSub) - 1, x1 = int((e.cx + outer) / kSub) + 1;
        const int y0 = int((e.cy - outer) / kSub) - 1, y1 = int((e.cy + outer) / kSub) + 1;
        if (x0 < 1 || y0 < 1 || x1 >= w - 1 || y1 >= h - 1) continue;
        bool clash = false;
        for (int y = y0; y <= y1 && !clash; ++y)
          for (int x = x0; x <= x1 && !clash; ++x) clash = e.contains(x, y, rim + kSub) && occupied[at(x, y)];
        if (clash) continue;
        for (int y = y0; y <= y1; ++y)
          for (int x = x0; x <= x1; ++x)
            if (e.contains(x, y, rim + kSub)) occupied[at(x, y)] = 1;
        caps.push_back(e);
        placed = true;
      }
      if (!placed) return false;
    }
  }

  // Carve lumens (instances) and rims (membrane) out of the CM tiling.
  const auto cap_base = std::uint32_t(sites.size()) + 1;
  for (std::size_t i = 0; i < caps.size(); ++i) {
    const auto& e = caps[i];
    const std::int64_t outer = std::max(e.a, e.b) + rim;
    const int x0 = int((e.cx - outer) / kSub) - 1, x1 = int((e.cx + outer) / kSub) + 1;
    const int y0 = int((e.cy - outer) / kSub) - 1, y1 = int((e.cy + outer) / kSub) + 1;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        if (e.contains(x, y, 0))
          labels[at(x, y)] = cap_base + std::uint32_t(i);
        else if (e.contains(x, y, rim))
          labels[at(x, y)] = 0;
      }
  }
  keep_largest_components(labels, w, h);

  // Drop CM fragments that are not clearly larger than any capillary.
  std::vector<std::size_t> area(cap_base + caps.size(), 0);
  for (auto l : labels) ++area[l];
  std::size_t max_cap = 0;
  for (std::size_t i = 0; i < caps.size(); ++i) max_cap = std::max(max_cap, area[cap_base + i]);
  const double r_max = spec.capillary_radius_max_px;
  const auto cm_floor = std::max<std::size_t>(std::size_t(4.0 * 3.14159 * r_max * r_max), 4 * max_cap);

  // Relabel: CMs 1..n in cell order, then capillaries.
  std::vector<std::uint32_t> remap(area.size(), 0);
  LabelImage truth(w, h);
  std::uint32_t next = 1;
  for (std::uint32_t l = 1; l < cap_base; ++l)
    if (area[l] > 0 && area[l] >= cm_floor) {
      remap[l] = next;
      truth.set_category(next++, Category::CM);
    }
  for (std::size_t i = 0; i < caps.size(); ++i) {
    const auto l = cap_base + std::uint32_t(i);
    if (area[l] == 0) return false;
    remap[l] = next;
    truth.set_category(next++, Category::Capillary);
  }
  if (truth.categories().empty()) return false;
  auto tl = truth.labels();
  for (std::size_t p = 0; p < npx; ++p) tl[p] = remap[labels[p]];

  // Each tight box's centroid must fall on its own instance.
  auto annotations = annotations_from_truth(truth);
  for (const auto& a : annotations) {
    auto [cx, cy] = point_to_pixel(box_centroid(a.box), w, h);
    if (truth(cx, cy) != std::uint32_t(a.id)) return false;
  }

  GrayImage image(w, h);
  Rng noise(derive_seed(seed, 0x0015Eu));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double base =
          truth(x, y) == 0 ? spec.intensity.membrane_level : spec.intensity.interior_level;
      const double v = base + spec.intensity.noise_sd * noise.normal();
      image(x, y) = std::uint16_t(std::clamp<long>(std::lround(v), 0L, 65535L));
    }

  out = {std::move(image), std::move(truth), std::move(annotations)};
  return true;
}

}  // namespace synth_detail

inline constexpr int kSceneAttempts = 32;

inline SyntheticScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  SyntheticScene scene;
  for (int attempt = 0; attempt < kSceneAttempts; ++attempt)
    if (synth_detail::try_generate(spec, derive_seed(spec.seed, std::uint64_t(attempt)), scene)) return scene;
  throw Error("generate_scene: could not satisfy the scene spec after " + std::to_string(kSceneAttempts) +
              " attempts (seed " + std::to_string(spec.seed) + ")");
}

}  // namespace autoqc
