#pragma once

// Multi-run summaries (mean +/- SD) and two-tailed Student t-tests.

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "autoqc/error.hpp"

namespace autoqc::stats {

inline constexpr double kBetaCfTolerance = 1e-12;
inline constexpr int kBetaCfMaxIter = 10000;

namespace detail {

// Continued fraction for I_x(a, b), modified Lentz evaluation.
inline double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kBetaCfMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kBetaCfTolerance) return h;
  }
  throw Error("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

// Regularized incomplete beta function I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw Error("incomplete beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw Error("incomplete beta: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

// Two-tailed p-value of Student's t with df degrees of freedom.
inline double t_two_tailed_p(double t, double df) {
  if (!(df > 0.0)) throw Error("t distribution: df must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

struct RunSeries {
  std::string label;
  std::vector<double> values;
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
};

inline Summary summarize(const std::vector<double>& values) {
  if (values.size() < 2) throw Error("summarize: need at least 2 values for a standard deviation");
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error("summarize: non-finite value");
    sum += v;
  }
  const double mean = sum / double(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / double(values.size() - 1))};
}

inline Summary summarize(const RunSeries& s) { return summarize(s.values); }

// Mean to 3 significant figures, SD to 4 decimals: "0.824±0.0070".
inline std::string format_mean_sd(const Summary& s) {
  char mean[32], sd[32];
  std::snprintf(mean, sizeof mean, "%#.3g", s.mean);
  std::snprintf(sd, sizeof sd, "%.4f", s.sd);
  std::string m = mean;
  if (!m.empty() && m.back() == '.') m.pop_back();
  return m + "±" + sd;
}

enum class TTestKind { Paired, Unpaired, Welch };

inline std::string ttest_kind_name(TTestKind k) {
  switch (k) {
    case TTestKind::Paired: return "paired";
    case TTestKind::Unpaired: return "unpaired";
    case TTestKind::Welch: return "welch";
  }
  return "?";
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  TTestKind kind = TTestKind::Unpaired;
};

namespace detail {

inline TTestResult finish(double diff, double se, double df, TTestKind kind) {
  TTestResult r{0.0, df, 1.0, kind};
  if (se == 0.0) {
    if (diff == 0.0) return r;
    warn("t_test: zero variance with unequal means, p set to 0");
    r.t = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = diff / se;
  r.p = t_two_tailed_p(r.t, df);
  return r;
}

inline double variance(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / double(v.size() - 1);
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

}  // namespace detail

inline TTestResult t_test(const std::vector<double>& a, const std::vector<double>& b, TTestKind kind) {
  for (const auto* v : {&a, &b})
    for (double x : *v)
      if (!std::isfinite(x)) throw Error("t_test: non-finite value");

  if (kind == TTestKind::Paired) {
    if (a.size() != b.size()) throw Error("t_test: paired samples must have equal length");
    if (a.size() < 2) throw Error("t_test: paired test needs at least 2 pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double md = detail::mean_of(d);
    const double se = std::sqrt(detail::variance(d, md) / double(d.size()));
    return detail::finish(md, se, double(d.size() - 1), kind);
  }

  if (a.size() < 2 || b.size() < 2) throw Error("t_test: each sample needs at least 2 values");
  const double na = double(a.size()), nb = double(b.size());
  const double ma = detail::mean_of(a), mb = detail::mean_of(b);
  const double va = detail::variance(a, ma), vb = detail::variance(b, mb);
  if (kind == TTestKind::Unpaired) {
    const double df = na + nb - 2.0;
    const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    return detail::finish(ma - mb, std::sqrt(pooled * (1.0 / na + 1.0 / nb)), df, kind);
  }
  const double sa = va / na, sb = vb / nb;
  const double se2 = sa + sb;
  double df = na + nb - 2.0;
  if (se2 > 0.0) df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  return detail::finish(ma - mb, std::sqrt(se2), df, kind);
}

inline TTestResult t_test(const RunSeries& a, const RunSeries& b, TTestKind kind) {
  return t_test(a.values, b.values, kind);
}

struct Comparison {
  std::string metric;
  std::string model_a;
  std::string model_b;
  TTestResult result;
  bool significant = false;
};

// All pairs (i < j) of models for one metric.
inline std::vector<Comparison> significance_table(const std::string& metric, const std::vector<RunSeries>& models,
                                                  TTestKind kind, double alpha = 0.05) {
  if (models.size() < 2) throw Error("significance_table: need at least 2 models");
  std::vector<Comparison> rows;
  for (std::size_t i = 0; i < models.size(); ++i)
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      const auto r = t_test(models[i], models[j], kind);
      rows.push_back({metric, models[i].label, models[j].label, r, r.p < alpha});
    }
  return rows;
}

}  // namespace autoqc::stats
