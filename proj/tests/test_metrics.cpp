#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "autoqc/metrics.hpp"
#include "autoqc/rng.hpp"

using namespace autoqc;

namespace {

BitMask rect(int w, int h, int x0, int y0, int x1, int y1) {
  BitMask m(w, h);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.set(x, y);
  return m;
}

// Truth 20x25 (500 px) and prediction 20x15 (300 px) nested: IoU = 300/500.
ImageEval iou_06_fixture() {
  ImageEval e;
  e.image_id = 1;
  e.truths.push_back({rect(40, 40, 0, 0, 20, 25), Category::CM, 1});
  e.preds.push_back({rect(40, 40, 0, 0, 20, 15), Category::CM, 0.9, 1});
  return e;
}

// Maximum-cardinality matching with IoU >= phi within each category, by trying
// every injective assignment.
int brute_force_max_matching(const std::vector<PredInstance>& preds, const std::vector<TruthInstance>& truths,
                             double phi) {
  int best = 0;
  std::vector<int> assign(preds.size(), -1);
  std::vector<bool> used(truths.size(), false);
  auto rec = [&](auto&& self, std::size_t i, int count) -> void {
    if (i == preds.size()) {
      best = std::max(best, count);
      return;
    }
    self(self, i + 1, count);
    for (std::size_t j = 0; j < truths.size(); ++j) {
      if (used[j] || truths[j].category != preds[i].category) continue;
      const auto o = mask_overlap(preds[i].mask, truths[j].mask);
      if (double(o.intersection) / double(o.union_) < phi) continue;
      used[j] = true;
      self(self, i + 1, count + 1);
      used[j] = false;
    }
  };
  rec(rec, 0, 0);
  return best;
}

ImageEval random_image(Rng& rng, std::int64_t id, int max_preds, int max_truths) {
  ImageEval e;
  e.image_id = id;
  const int nt = int(rng.uniform_int(0, max_truths)), np = int(rng.uniform_int(0, max_preds));
  for (int j = 0; j < nt; ++j) {
    const int x = int(rng.uniform_int(0, 20)), y = int(rng.uniform_int(0, 20));
    e.truths.push_back({rect(32, 32, x, y, x + int(rng.uniform_int(3, 12)), y + int(rng.uniform_int(3, 12))),
                        rng.bernoulli(0.7) ? Category::CM : Category::Capillary, j + 1});
  }
  for (int i = 0; i < np; ++i) {
    BitMask m;
    if (!e.truths.empty() && rng.bernoulli(0.7)) {
      // Perturbed copy of a truth box.
      const auto& t = e.truths[std::size_t(rng.uniform_int(0, nt - 1))];
      const auto b = mask_tight_box(t.mask);
      const int dx = int(rng.uniform_int(-2, 2)), dy = int(rng.uniform_int(-2, 2));
      m = rect(32, 32, std::clamp(int(b.x_min) + dx, 0, 31), std::clamp(int(b.y_min) + dy, 0, 31),
               std::clamp(int(b.x_max) + dx, 1, 32), std::clamp(int(b.y_max) + dy, 1, 32));
    } else {
      const int x = int(rng.uniform_int(0, 20)), y = int(rng.uniform_int(0, 20));
      m = rect(32, 32, x, y, x + int(rng.uniform_int(2, 12)), y + int(rng.uniform_int(2, 12)));
    }
    e.preds.push_back({m, rng.bernoulli(0.7) ? Category::CM : Category::Capillary, rng.uniform01(), i + 1});
  }
  return e;
}

}  // namespace

TEST(Metrics, ThresholdSpec) {
  EXPECT_EQ(IoUThresholdSpec::range().thresholds().size(), 10u);
  EXPECT_EQ(IoUThresholdSpec::range().thresholds()[2], 300.0 / 500.0);
  EXPECT_EQ(IoUThresholdSpec::range().thresholds().back(), 0.95);
  EXPECT_EQ(IoUThresholdSpec::single(0.75).label(), "0.75");
  EXPECT_EQ(IoUThresholdSpec::single(0.5).label(), "0.5");
  EXPECT_EQ(IoUThresholdSpec::range().label(), "0.5:0.95");
  EXPECT_THROW(IoUThresholdSpec::single(1.0), ConfigError);
  EXPECT_THROW(IoUThresholdSpec::single(0.0), ConfigError);
}

TEST(Metrics, F1) {
  EXPECT_NEAR(f1_from(0.824, 0.844), 0.834, 0.001);
  EXPECT_NEAR(f1_from(0.695, 0.756), 0.724, 0.001);
  EXPECT_EQ(f1_from(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(f1_from(0.37, 0.37), 0.37);
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform01(), b = rng.uniform01();
    const double f = f1_from(a, b);
    EXPECT_LE(f, (a + b) / 2 + 1e-15);
    EXPECT_LE(f, 2 * std::min(a, b) + 1e-15);
  }
}

TEST(Metrics, IdenticalPredictionIsTpAtAnyThreshold) {
  const auto m = rect(10, 10, 2, 2, 5, 6);
  for (double phi : {0.5, 0.95, 1.0}) {
    const auto r = match_instances({{m, Category::CM, 1.0, 1}}, {{m, Category::CM, 1}}, phi);
    EXPECT_EQ(r[Category::CM].tp, 1);
    EXPECT_EQ(r[Category::CM].fp, 0);
    EXPECT_EQ(r[Category::CM].fn, 0);
  }
}

TEST(Metrics, SixTenthsFixture) {
  const auto e = iou_06_fixture();
  auto r = match_instances(e.preds, e.truths, 0.5);
  EXPECT_EQ(r[Category::CM].tp, 1);
  EXPECT_EQ(r[Category::CM].pairs.at(0).iou, 0.6);
  r = match_instances(e.preds, e.truths, 0.75);
  EXPECT_EQ(r[Category::CM].fp, 1);
  EXPECT_EQ(r[Category::CM].fn, 1);
  for (auto mode : {EvalMode::PaperLiteral, EvalMode::DatasetLevel}) {
    const auto rep = evaluate({e}, standard_threshold_specs(), mode);
    EXPECT_EQ(rep.entries[0].all.map, 1.0);
    EXPECT_EQ(rep.entries[1].all.map, 0.0);
    EXPECT_EQ(rep.entries[2].all.map, 0.3);
    EXPECT_EQ(rep.entries[2].all.mar, 0.3);
  }
}

TEST(Metrics, WrongCategoryIsFpAndFn) {
  const auto m = rect(10, 10, 2, 2, 5, 6);
  const auto r = match_instances({{m, Category::Capillary, 1.0, 1}}, {{m, Category::CM, 1}}, 0.5);
  EXPECT_EQ(r[Category::Capillary].fp, 1);
  EXPECT_EQ(r[Category::Capillary].tn_diagnostic, 1);
  EXPECT_EQ(r[Category::CM].fn, 1);
  EXPECT_EQ(r[Category::CM].tp + r[Category::Capillary].tp, 0);
}

TEST(Metrics, GreedyTakesHighestConfidenceFirst) {
  const auto t = rect(10, 10, 0, 0, 4, 4);
  // Both predictions overlap the one truth; the more confident one wins even with lower IoU.
  const auto r = match_instances({{rect(10, 10, 0, 0, 4, 3), Category::CM, 0.4, 1},
                                  {rect(10, 10, 0, 0, 4, 4), Category::CM, 0.3, 2}},
                                 {{t, Category::CM, 9}}, 0.5);
  ASSERT_EQ(r[Category::CM].pairs.size(), 1u);
  EXPECT_EQ(r[Category::CM].pairs[0].pred_id, 1);
  // Equal confidence: lower id first.
  const auto s = match_instances({{rect(10, 10, 0, 0, 4, 4), Category::CM, 0.5, 7},
                                  {rect(10, 10, 0, 0, 4, 3), Category::CM, 0.5, 3}},
                                 {{t, Category::CM, 9}}, 0.5);
  EXPECT_EQ(s[Category::CM].pairs[0].pred_id, 3);
}

TEST(Metrics, DimensionMismatchThrows) {
  EXPECT_THROW(match_instances({{rect(10, 10, 0, 0, 2, 2), Category::CM, 1, 1}},
                               {{rect(11, 10, 0, 0, 2, 2), Category::CM, 1}}, 0.5),
               DimensionError);
  EXPECT_THROW(evaluate(std::vector<ImageEval>{}, IoUThresholdSpec::range()), Error);
}

TEST(Metrics, GreedyEqualsExhaustiveMatchingOnSmallImages) {
  Rng rng(21);
  int checked = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const auto e = random_image(rng, 1, 4, 4);
    for (double phi : {0.5, 0.75}) {
      const auto r = match_instances(e.preds, e.truths, phi);
      // Non-adversarial: skip images where one prediction clears phi against
      // several same-category truths (greedy may then be suboptimal).
      bool ambiguous = false;
      for (const auto& p : e.preds) {
        int hits = 0;
        for (const auto& t : e.truths)
          if (t.category == p.category) {
            const auto o = mask_overlap(p.mask, t.mask);
            hits += double(o.intersection) / double(o.union_) >= phi;
          }
        ambiguous = ambiguous || hits > 1;
      }
      if (ambiguous) continue;
      ++checked;
      EXPECT_EQ(r[Category::CM].tp + r[Category::Capillary].tp, brute_force_max_matching(e.preds, e.truths, phi));
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(Metrics, MatchInvariants) {
  Rng rng(22);
  for (int trial = 0; trial < 300; ++trial) {
    const auto e = random_image(rng, 1, 8, 8);
    int prev_tp = 1 << 30;
    for (double phi : IoUThresholdSpec::range().thresholds()) {
      const auto r = match_instances(e.preds, e.truths, phi);
      int tp = 0, fp = 0, fn = 0;
      for (auto c : kCategories) {
        const auto& cm = r[c];
        EXPECT_EQ(std::size_t(cm.tp), cm.pairs.size());
        std::vector<std::int64_t> gts;
        for (const auto& p : cm.pairs) gts.push_back(p.gt_id);
        std::sort(gts.begin(), gts.end());
        EXPECT_EQ(std::adjacent_find(gts.begin(), gts.end()), gts.end());
        tp += cm.tp;
        fp += cm.fp;
        fn += cm.fn;
      }
      EXPECT_EQ(std::size_t(tp + fp), e.preds.size());
      EXPECT_EQ(std::size_t(tp + fn), e.truths.size());
      EXPECT_LE(tp, prev_tp);
      prev_tp = tp;
    }
  }
}

TEST(Metrics, ScoresNonIncreasingInThreshold) {
  Rng rng(23);
  std::vector<ImageEval> ds;
  for (int i = 0; i < 20; ++i) ds.push_back(random_image(rng, i + 1, 8, 8));
  for (auto mode : {EvalMode::PaperLiteral, EvalMode::DatasetLevel}) {
    double prev_ap = 2, prev_ar = 2;
    for (double phi : IoUThresholdSpec::range().thresholds()) {
      const auto r = evaluate(ds, IoUThresholdSpec::single(phi), mode);
      EXPECT_LE(r.entries[0].all.mar, prev_ar);
      if (mode == EvalMode::PaperLiteral) {
        EXPECT_LE(r.entries[0].all.map, prev_ap);
      }
      prev_ap = r.entries[0].all.map;
      prev_ar = r.entries[0].all.mar;
    }
  }
}

TEST(Metrics, PermutationInvariance) {
  Rng rng(24);
  std::vector<ImageEval> ds;
  for (int i = 0; i < 12; ++i) ds.push_back(random_image(rng, 100 - i, 6, 6));
  for (auto mode : {EvalMode::PaperLiteral, EvalMode::DatasetLevel}) {
    const auto base = evaluate(ds, standard_threshold_specs(), mode);
    auto shuffled = ds;
    std::reverse(shuffled.begin(), shuffled.end());
    for (auto& img : shuffled) std::reverse(img.preds.begin(), img.preds.end());
    const auto other = evaluate(shuffled, standard_threshold_specs(), mode);
    for (std::size_t k = 0; k < base.entries.size(); ++k) {
      EXPECT_EQ(base.entries[k].all.map, other.entries[k].all.map);
      EXPECT_EQ(base.entries[k].all.mar, other.entries[k].all.mar);
    }
  }
}

TEST(Metrics, PerfectPredictionsScoreOneInBothModes) {
  Rng rng(25);
  std::vector<ImageEval> ds;
  for (int i = 0; i < 10; ++i) {
    auto e = random_image(rng, i + 1, 0, 6);
    for (const auto& t : e.truths) e.preds.push_back({t.mask, t.category, rng.uniform01(), t.id});
    ds.push_back(e);
  }
  for (auto mode : {EvalMode::PaperLiteral, EvalMode::DatasetLevel}) {
    for (const auto& entry : evaluate(ds, standard_threshold_specs(), mode).entries) {
      EXPECT_EQ(entry.all.map, 1.0);
      EXPECT_EQ(entry.all.mar, 1.0);
      EXPECT_EQ(entry.all.f1, 1.0);
    }
  }
}

TEST(Metrics, PaperLiteralDegenerateCells) {
  // Image 1: one CM truth found, plus a stray capillary prediction with no capillary truth.
  ImageEval a;
  a.image_id = 1;
  a.truths.push_back({rect(10, 10, 0, 0, 4, 4), Category::CM, 1});
  a.preds.push_back({rect(10, 10, 0, 0, 4, 4), Category::CM, 0.9, 1});
  a.preds.push_back({rect(10, 10, 6, 6, 8, 8), Category::Capillary, 0.9, 2});
  // Image 2: one CM truth, nothing predicted; the empty capillary cell is skipped.
  ImageEval b;
  b.image_id = 2;
  b.truths.push_back({rect(10, 10, 0, 0, 4, 4), Category::CM, 1});
  const auto r = evaluate({a, b}, IoUThresholdSpec::single(0.5), EvalMode::PaperLiteral).entries[0];
  // Image 1: CM (1, 1), CAP (0, 0) -> (0.5, 0.5). Image 2: CM (0, 0).
  EXPECT_EQ(r.all.map, 0.25);
  EXPECT_EQ(r.all.mar, 0.25);
  EXPECT_EQ(r.per_category[0].map, 0.5);
  EXPECT_EQ(r.per_category[1].map, 0.0);
}

TEST(Metrics, DatasetLevelInterpolatedAp) {
  // Two truths; ranked outcomes TP, FP, TP: precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1.
  // Interpolated precision is 1 for r <= 0.5 (51 points) and 2/3 above (50 points).
  ImageEval e;
  e.image_id = 1;
  e.truths.push_back({rect(20, 20, 0, 0, 4, 4), Category::CM, 1});
  e.truths.push_back({rect(20, 20, 10, 10, 14, 14), Category::CM, 2});
  e.preds.push_back({rect(20, 20, 0, 0, 4, 4), Category::CM, 0.9, 1});
  e.preds.push_back({rect(20, 20, 5, 5, 7, 7), Category::CM, 0.8, 2});
  e.preds.push_back({rect(20, 20, 10, 10, 14, 14), Category::CM, 0.7, 3});
  const auto r = evaluate({e}, IoUThresholdSpec::single(0.5), EvalMode::DatasetLevel).entries[0];
  EXPECT_NEAR(r.per_category[0].map, (51.0 + 50.0 * 2.0 / 3.0) / 101.0, 1e-15);
  EXPECT_EQ(r.per_category[0].mar, 1.0);
  EXPECT_FALSE(r.per_category[1].defined);
}
