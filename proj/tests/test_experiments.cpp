#include <gtest/gtest.h>

#include "lapkey/experiments.hpp"

using namespace lapkey;
using namespace lapkey::experiments;

TEST(ForSeeds, ResultsFollowSeedOrder) {
  const std::vector<std::uint64_t> seeds{5, 1, 9, 3, 7};
  const auto out = for_seeds(seeds, 3, [](std::uint64_t s) { return 10 * s; });
  EXPECT_EQ(out, (std::vector<std::uint64_t>{50, 10, 90, 30, 70}));
}

TEST(ForSeeds, RethrowsFirstFailureInSeedOrder) {
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  try {
    for_seeds(seeds, 4, [](std::uint64_t s) -> int {
      if (s >= 1) throw DomainError("seed " + std::to_string(s));
      return 0;
    });
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_STREQ(e.what(), "seed 1");
  }
}

TEST(GapTrend, CountsIncreases) {
  std::vector<BoundReport> reps(4);
  const double gaps[] = {3.0, 2.0, 2.5, 1.0};
  for (int i = 0; i < 4; ++i) {
    reps[i].k = i + 1;
    reps[i].bound_loose = gaps[i];
  }
  const auto t = gap_trend("x", reps);
  EXPECT_EQ(t.increases, 1);
  EXPECT_NEAR(t.max_increase, 0.5, 1e-15);
}

TEST(BoundSweep, FourRoomsDominanceOverAllGapCutoffs) {
  const auto g = four_rooms();
  const auto spec = grid_spectrum(g);
  const auto sweep = bound_sweep(g, spec, reward_library(g), 0.95, 2, 104);
  EXPECT_EQ(sweep.trends.size(), 4u);
  EXPECT_FALSE(sweep.rows.empty());
  for (const auto& row : sweep.rows) {
    EXPECT_LE(row.report.value_error, row.report.bound_tight + 1e-8);
    EXPECT_LE(row.report.bound_tight, row.report.bound_loose + 1e-8);
    EXPECT_TRUE(row.report.canonical_cut);
  }
}

TEST(InSpanReward, LiesInSpan) {
  const auto g = four_rooms();
  const auto spec = grid_spectrum(g);
  const auto r = in_span_reward(spec.basis, 6, 3);
  const Matrix phi = spec.basis.eigenvectors.leftCols(6);
  EXPECT_LE((phi * (phi.transpose() * r.values) - r.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ZeroShotExperiment, ExactWeightsFailOutsideSpan) {
  ZeroShotConfig cfg;
  const auto res = four_rooms_zero_shot(cfg, 0);
  EXPECT_EQ(res.eval.success_rate, 0.0);
  EXPECT_EQ(res.weight_error, 0.0);
}

TEST(StitchExperiment, SmallRunIsDeterministic) {
  StitchConfig cfg;
  cfg.episodes = 200;
  cfg.eval_interval = 50;
  cfg.eval_episodes = 5;
  const auto a = four_rooms_keyboard(cfg, 4);
  const auto b = four_rooms_keyboard(cfg, 4);
  EXPECT_EQ(a.agent.q, b.agent.q);
  EXPECT_EQ(a.curve.size(), 4u);
  EXPECT_EQ(a.keyboard.mean_return, b.keyboard.mean_return);
  EXPECT_EQ(a.library.size(), 13);
}

TEST(ItemExperiment, DeskRunReportsConsistentNumbers) {
  ItemRunConfig cfg;
  cfg.episodes = 500;
  const auto res = item_collector_keyboard(cfg, 2);
  EXPECT_LE(res.keyboard, res.optimal + 1e-12);
  EXPECT_LE(res.best_single, res.optimal + 1e-12);
  EXPECT_GE(res.best_single, res.zero_shot - 1e-12);
  EXPECT_DOUBLE_EQ(res.improvement, percent_improvement(res.keyboard, res.zero_shot));
  EXPECT_FALSE(res.best_single_label.empty());
}
