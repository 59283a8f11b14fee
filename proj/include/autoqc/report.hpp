#pragma once

// CSV and text renderings of evaluation, capillarization, and statistics results.

#include <cstdio>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "autoqc/capiquant.hpp"
#include "autoqc/metrics.hpp"
#include "autoqc/stats.hpp"

namespace autoqc::report {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

// mode, threshold_spec, category|ALL, mAP, mAR, F1
inline std::string eval_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "mode,threshold_spec,category,mAP,mAR,F1\n";
  const auto mode = eval_mode_name(r.mode);
  for (const auto& e : r.entries) {
    auto row = [&](const std::string& cat, const MetricTriple& m) {
      if (!m.defined) return;
      out << mode << ',' << e.spec.label() << ',' << cat << ',' << num(m.map) << ',' << num(m.mar) << ','
          << num(m.f1) << '\n';
    };
    row("ALL", e.all);
    for (auto c : kCategories) row(std::string(category_name(c)), e.per_category[std::size_t(category_id(c) - 1)]);
  }
  return out.str();
}

inline std::string eval_text(const EvalReport& r) {
  std::ostringstream out;
  out << "Instance segmentation (" << (r.mode == EvalMode::PaperLiteral ? "per-image" : "dataset-level")
      << ", N = " << r.num_images << " images)\n";
  char line[160];
  std::snprintf(line, sizeof line, "  %-10s %-5s %8s %8s %8s\n", "IoU", "cat", "mAP", "mAR", "F1");
  out << line;
  for (const auto& e : r.entries) {
    auto row = [&](const char* cat, const MetricTriple& m) {
      if (!m.defined) return;
      std::snprintf(line, sizeof line, "  %-10s %-5s %8.4f %8.4f %8.4f\n", e.spec.label().c_str(), cat, m.map, m.mar,
                    m.f1);
      out << line;
    };
    row("ALL", e.all);
    row("CM", e.per_category[0]);
    row("CAP", e.per_category[1]);
  }
  return out.str();
}

struct ImageQuantification {
  std::int64_t image_id = 0;
  CapillarizationReport predicted;
  CapillarizationReport truth;
  AssessmentError error;
};

inline std::string capillarization_csv(const std::vector<std::pair<std::int64_t, CapillarizationReport>>& rows) {
  std::ostringstream out;
  out << "image_id,cm_count,cap_count,cm_area_um2,cap_area_um2,cdfa,cdca,ccr\n";
  for (const auto& [id, r] : rows)
    out << id << ',' << r.cm_count << ',' << r.cap_count << ',' << num(r.cm_area_um2) << ',' << num(r.cap_area_um2)
        << ',' << num(r.cdfa_per_um2) << ',' << num(r.cdca_per_um2) << ',' << num(r.ccr) << '\n';
  return out.str();
}

inline std::string errors_csv(const std::vector<ImageQuantification>& rows) {
  std::ostringstream out;
  out << "image_id";
  for (auto m : kMeasurements) out << ",δ_" << measurement_name(m);
  out << '\n';
  for (const auto& q : rows) {
    out << q.image_id;
    for (auto m : kMeasurements) out << ',' << num(q.error[m]);
    out << '\n';
  }
  return out.str();
}

inline std::string error_summary_csv(const std::array<ErrorSummary, 7>& s, Reduction reduction) {
  std::ostringstream out;
  out << "measurement,reduction,mean,sd,images_used,images_excluded\n";
  for (auto m : kMeasurements) {
    const auto& e = s[std::size_t(m)];
    out << measurement_name(m) << ',' << (reduction == Reduction::MeanAbs ? "mean_abs" : "mean_signed") << ','
        << num(e.mean) << ',' << num(e.sd) << ',' << e.used << ',' << e.excluded << '\n';
  }
  return out.str();
}

inline std::string significance_csv(const std::vector<stats::Comparison>& rows) {
  std::ostringstream out;
  out << "metric,model_a,model_b,kind,t,df,p,significant\n";
  for (const auto& c : rows)
    out << c.metric << ',' << c.model_a << ',' << c.model_b << ',' << stats::ttest_kind_name(c.result.kind) << ','
        << num(c.result.t) << ',' << num(c.result.df) << ',' << num(c.result.p) << ','
        << (c.significant ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace autoqc::report
