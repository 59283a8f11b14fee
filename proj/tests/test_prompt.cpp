#include <gtest/gtest.h>

#include "autoqc/prompt.hpp"
#include "autoqc/rng.hpp"
#include "oracles.hpp"

using namespace autoqc;

namespace {

std::vector<Detection> random_detections(Rng& rng, int n) {
  std::vector<Detection> d;
  for (int i = 0; i < n; ++i) {
    // Integer corners make centroid-on-edge cases common.
    const double x = double(rng.uniform_int(0, 60)), y = double(rng.uniform_int(0, 60));
    const double w = double(rng.uniform_int(1, 30)), h = double(rng.uniform_int(1, 30));
    d.push_back({{x, y, x + w, y + h},
                 rng.bernoulli(0.5) ? Category::CM : Category::Capillary,
                 rng.uniform01(),
                 std::int64_t(100 + i)});
  }
  return d;
}

}  // namespace

TEST(Prompt, NestedCapillaryBecomesNegative) {
  const std::vector<Detection> d{{{0, 0, 10, 10}, Category::CM, 0.9, 1}, {{4, 4, 6, 6}, Category::Capillary, 0.8, 2}};
  const auto p = generate_prompts(d, PromptMode::BoxAndPoints);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].points, (std::vector<LabeledPoint>{{{5, 5}, 1}, {{5, 5}, 0}}));
  EXPECT_EQ(p[1].points, (std::vector<LabeledPoint>{{{5, 5}, 1}, {{5, 5}, 0}}));
  EXPECT_EQ(*p[0].box, d[0].box);
  EXPECT_EQ(p[1].category, Category::Capillary);
  EXPECT_EQ(p[1].source_id, 2);
}

TEST(Prompt, CentroidOnEdgeCounts) {
  const std::vector<Detection> d{{{0, 0, 4, 4}, Category::CM, 1, 1}, {{4, 0, 6, 8}, Category::CM, 1, 2}};
  // Centroid of 2 is (5, 4): outside box 1. Centroid of 1 is (2, 2): outside box 2.
  auto p = generate_prompts(d, PromptMode::PointsOnly);
  EXPECT_EQ(p[0].points.size(), 1u);
  const std::vector<Detection> e{{{0, 0, 4, 4}, Category::CM, 1, 1}, {{2, 2, 6, 6}, Category::CM, 1, 2}};
  // Centroid of 2 is (4, 4): on the corner of box 1.
  p = generate_prompts(e, PromptMode::PointsOnly);
  ASSERT_EQ(p[0].points.size(), 2u);
  EXPECT_EQ(p[0].points[1], (LabeledPoint{{4, 4}, 0}));
}

TEST(Prompt, ModesControlBoxAndPoints) {
  const std::vector<Detection> d{{{0, 0, 10, 10}, Category::CM, 0.5, 7}};
  EXPECT_FALSE(generate_prompts(d, PromptMode::PointsOnly)[0].box);
  EXPECT_TRUE(generate_prompts(d, PromptMode::BoxOnly)[0].points.empty());
  const auto both = generate_prompts(d, PromptMode::BoxAndPoints)[0];
  EXPECT_TRUE(both.box);
  EXPECT_EQ(both.points.size(), 1u);
}

TEST(Prompt, EmptyInputAndErrors) {
  EXPECT_TRUE(generate_prompts({}, PromptMode::BoxAndPoints).empty());
  EXPECT_THROW(generate_prompts({{{0, 0, 1, 1}, Category::CM, 1, 1}, {{0, 0, 2, 2}, Category::CM, 1, 1}},
                                PromptMode::BoxOnly),
               Error);
  EXPECT_THROW(generate_prompts({{{0, 0, 0, 1}, Category::CM, 1, 1}}, PromptMode::BoxOnly), Error);
  EXPECT_THROW(prompt_mode_from_name("boxes"), ConfigError);
  EXPECT_EQ(prompt_mode_from_name("box+points"), PromptMode::BoxAndPoints);
}

TEST(Prompt, MatchesBruteForceOracle) {
  Rng rng(42);
  for (int scene = 0; scene < 300; ++scene) {
    const auto d = random_detections(rng, int(rng.uniform_int(0, 50)));
    for (auto mode : {PromptMode::PointsOnly, PromptMode::BoxOnly, PromptMode::BoxAndPoints})
      ASSERT_EQ(generate_prompts(d, mode), oracle::prompts(d, mode)) << "scene " << scene;
  }
}

TEST(Prompt, OnePromptPerDetectionAndSinglePositive) {
  Rng rng(5);
  const auto d = random_detections(rng, 40);
  const auto p = generate_prompts(d, PromptMode::BoxAndPoints);
  ASSERT_EQ(p.size(), d.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(p[i].source_id, d[i].id);
    EXPECT_EQ(p[i].points.front().label, 1);
    EXPECT_EQ(std::count_if(p[i].points.begin(), p[i].points.end(), [](auto& lp) { return lp.label == 1; }), 1);
  }
}

TEST(Prompt, Stats) {
  const std::vector<Detection> d{{{0, 0, 10, 10}, Category::CM, 0.9, 1},
                                 {{4, 4, 6, 6}, Category::Capillary, 0.8, 2},
                                 {{20, 20, 22, 22}, Category::Capillary, 0.8, 3}};
  const auto s = prompt_stats(generate_prompts(d, PromptMode::BoxAndPoints));
  EXPECT_EQ(s.negatives_per_prompt, (std::vector<std::size_t>{1, 1, 0}));
  EXPECT_EQ(s.total_negatives, 2u);
  EXPECT_DOUBLE_EQ(s.fraction_with_negative, 2.0 / 3.0);
}
