#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "autoqc/error.hpp"
#include "autoqc/geometry.hpp"

namespace autoqc {

namespace detail {

inline std::uint16_t clamp16(double v) { return std::uint16_t(std::clamp(std::lround(v), 0L, 65535L)); }

}  // namespace detail

// Adaptive 3x3 Wiener filter with edge replication:
//   out = mu + max(0, var - nu2) / max(var, nu2) * (in - mu)
// where mu, var are the 3x3 local mean and variance and nu2 is the given noise
// variance, or the mean of all local variances when none is given.
inline GrayImage wiener3x3(const GrayImage& img, std::optional<double> noise_var = std::nullopt) {
  const int w = img.width(), h = img.height();
  if (w < 3 || h < 3) throw DimensionError("wiener3x3: image must be at least 3x3");
  if (noise_var && !(*noise_var >= 0.0)) throw ConfigError("wiener3x3: noise variance must be >= 0");

  const std::size_t n = std::size_t(w) * std::size_t(h);
  std::vector<double> mean(n), var(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v[9];
      int k = 0;
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          v[k] = img(std::clamp(x + dx, 0, w - 1), std::clamp(y + dy, 0, h - 1));
          s += v[k++];
        }
      const double mu = s / 9.0;
      double ss = 0.0;
      for (double e : v) ss += (e - mu) * (e - mu);
      const auto i = std::size_t(y) * std::size_t(w) + std::size_t(x);
      mean[i] = mu;
      var[i] = ss / 9.0;
    }

  double nu2 = 0.0;
  if (noise_var) {
    nu2 = *noise_var;
  } else {
    for (double v : var) nu2 += v;
    nu2 /= double(n);
  }

  GrayImage out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto i = std::size_t(y) * std::size_t(w) + std::size_t(x);
      const double denom = std::max(var[i], nu2);
      const double gain = denom > 0.0 ? std::max(0.0, var[i] - nu2) / denom : 0.0;
      out(x, y) = detail::clamp16(mean[i] + gain * (double(img(x, y)) - mean[i]));
    }
  return out;
}

// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<std::uint16_t> values, double pct) {
  if (values.empty()) throw Error("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = pct / 100.0 * double(values.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return double(values[lo]) + frac * (double(values[hi]) - double(values[lo]));
}

// Linear map of [P_lo, P_hi] onto [0, 65535], clamped.
inline GrayImage contrast_stretch(const GrayImage& img, double lo_pct = 1.0, double hi_pct = 99.0) {
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
    throw ConfigError("contrast_stretch: need 0 <= lo_pct < hi_pct <= 100");
  const std::vector<std::uint16_t> samples(img.samples().begin(), img.samples().end());
  const double lo = percentile(samples, lo_pct);
  const double hi = percentile(samples, hi_pct);
  if (hi <= lo) {
    warn("contrast_stretch: image has no contrast between the chosen percentiles; left unchanged");
    return img;
  }
  GrayImage out(img.width(), img.height());
  auto src = img.samples();
  auto dst = out.samples();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = detail::clamp16((double(src[i]) - lo) / (hi - lo) * 65535.0);
  return out;
}

}  // namespace autoqc
