#include <gtest/gtest.h>

#include "lapkey/envs.hpp"
#include "lapkey/planning.hpp"

using namespace lapkey;

TEST(FourRooms, HasCanonicalSize) {
  const auto g = four_rooms();
  EXPECT_EQ(g.n_states(), 104);
  EXPECT_EQ(g.mdp.n_actions(), 4);
  EXPECT_EQ(g.spec.width, 13);
  EXPECT_EQ(g.spec.height, 13);
  EXPECT_EQ(four_rooms_start_region(g).size(), 25u);
}

TEST(FourRooms, WallBumpStaysInPlace) {
  const auto g = four_rooms();
  const int corner = g.state_at({1, 1});
  EXPECT_DOUBLE_EQ(g.mdp.prob(corner, kNorth, corner), 1.0);
  EXPECT_DOUBLE_EQ(g.mdp.prob(corner, kWest, corner), 1.0);
  EXPECT_DOUBLE_EQ(g.mdp.prob(corner, kEast, g.state_at({1, 2})), 1.0);
  EXPECT_EQ(g.state_of({0, 0}), -1);
  EXPECT_THROW(g.state_at({0, 0}), DomainError);
}

TEST(FourRooms, ConnectedWithOneZeroEigenvalue) {
  const auto g = four_rooms();
  const auto b = eigendecompose(build_laplacian(induced_transition_matrix(g.mdp, PolicyTable::uniform(104, 4))));
  int zeros = 0;
  for (int i = 0; i < 104; ++i) zeros += b.eigenvalues(i) < 1e-10;
  EXPECT_EQ(zeros, 1);
}

TEST(FourRooms, GoalTaskIsTerminalAtGoal) {
  const auto g = four_rooms_goal_task();
  const auto task = g.task();
  const int goal = g.state_at(kFourRoomsGoal);
  EXPECT_TRUE(task.is_terminal(goal));
  EXPECT_FALSE(g.mdp.is_terminal(goal));
  EXPECT_DOUBLE_EQ(g.goal_reward().values.sum(), 1.0);
  EXPECT_NE(g.ascii().find('G'), std::string::npos);
}

TEST(GridSpec, AsciiRoundTrip) {
  const auto spec = grid_spec_from_ascii({"#####", "#..G#", "#.#.#", "#####"}, 0.9);
  const auto g = build_grid(spec);
  EXPECT_EQ(g.n_states(), 5);
  EXPECT_EQ(g.goal_states().size(), 1u);
  EXPECT_EQ(g.ascii(), "#####\n#..G#\n#.#.#\n#####\n");
}

TEST(GridSpec, SlipSpreadsProbability) {
  GridSpec spec;
  spec.width = spec.height = 3;
  spec.slip = 0.4;
  const auto g = build_grid(spec);
  const int centre = g.state_at({1, 1});
  EXPECT_NEAR(g.mdp.prob(centre, kNorth, g.state_at({0, 1})), 0.6 + 0.1, 1e-12);
  EXPECT_NEAR(g.mdp.prob(centre, kNorth, g.state_at({1, 0})), 0.1, 1e-12);
}

TEST(GridSpec, TorusWrapsAround) {
  GridSpec spec;
  spec.width = spec.height = 4;
  spec.toroidal = true;
  const auto g = build_grid(spec);
  EXPECT_DOUBLE_EQ(g.mdp.prob(g.state_at({0, 0}), kNorth, g.state_at({3, 0})), 1.0);
  const auto p = induced_transition_matrix(g.mdp, PolicyTable::uniform(16, 4));
  EXPECT_TRUE(check_reversibility(p).pass);
}

TEST(RewardLibrary, SortedByGraphNorm) {
  const auto g = four_rooms();
  const auto lib = reward_library(g);
  ASSERT_EQ(lib.size(), 4u);
  for (std::size_t i = 1; i < lib.size(); ++i) EXPECT_LE(lib[i - 1].graph_norm, lib[i].graph_norm);
  EXPECT_EQ(lib.front().id, "radial");
  EXPECT_EQ(lib.back().id, "noise");
}

TEST(RewardLibrary, NoiseIsRougherThanSingleGoalForEverySeed) {
  const auto g = four_rooms();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto lib = reward_library(g, seed);
    double noise = 0.0, single = 0.0;
    for (const auto& r : lib) {
      if (r.id == "noise") noise = r.graph_norm;
      if (r.id == "single_goal") single = r.graph_norm;
    }
    EXPECT_GT(noise, single) << "seed " << seed;
  }
}

TEST(ItemCollector, DeskConfigSize) {
  const auto ic = item_collector({5, 2, 50, 0, ItemRewardScheme::kOrdered, 0.95});
  EXPECT_EQ(ic.mdp.n_states(), 400);
  EXPECT_EQ(ic.item_cells.size(), 4u);
  EXPECT_EQ(ic.mask_of(ic.start_state), 0u);
  for (int c : ic.item_cells) EXPECT_NE(c, ic.cell_of(ic.start_state));
}

TEST(ItemCollector, FullConfigSizeAndMaximumReturn) {
  const auto ic = item_collector({});
  EXPECT_EQ(ic.mdp.n_states(), 102400);
  const Vector v = finite_horizon_value(ic.mdp, ic.reward, ic.config.horizon);
  EXPECT_DOUBLE_EQ(v(ic.start_state), 10.0);
}

TEST(ItemCollector, OrderedSchemePaysSecondTypeOnlyAfterFirst) {
  const auto ic = item_collector({5, 1, 50, 3, ItemRewardScheme::kOrdered, 0.95});
  const int n = ic.n_cells();
  const int a_cell = ic.item_cells[0];
  const int b_cell = ic.item_cells[1];
  EXPECT_DOUBLE_EQ(ic.reward(ic.state_of(0, 0), 0, ic.state_of(a_cell, 1)), 1.0);
  EXPECT_DOUBLE_EQ(ic.reward(ic.state_of(0, 0), 0, ic.state_of(b_cell, 2)), 0.0);
  EXPECT_DOUBLE_EQ(ic.reward(ic.state_of(0, 1), 0, ic.state_of(b_cell, 3)), 1.0);
  EXPECT_DOUBLE_EQ(ic.reward(ic.state_of(0, 1), 0, ic.state_of(1 % n, 1)), 0.0);
  const auto any = item_collector({5, 1, 50, 3, ItemRewardScheme::kAny, 0.95});
  EXPECT_DOUBLE_EQ(any.reward(any.state_of(0, 0), 0, any.state_of(b_cell, 2)), 1.0);
}

TEST(ItemCollector, LayoutDependsOnlyOnSeed) {
  const auto a = item_collector({5, 2, 50, 11, ItemRewardScheme::kOrdered, 0.95});
  const auto b = item_collector({5, 2, 50, 11, ItemRewardScheme::kOrdered, 0.95});
  const auto c = item_collector({5, 2, 50, 12, ItemRewardScheme::kOrdered, 0.95});
  EXPECT_EQ(a.item_cells, b.item_cells);
  EXPECT_EQ(a.start_state, b.start_state);
  EXPECT_TRUE(a.item_cells != c.item_cells || a.start_state != c.start_state);
}

TEST(ItemCollector, PositionChainIsSymmetricAndLiftCopiesRows) {
  const auto ic = item_collector({5, 2, 50, 0, ItemRewardScheme::kOrdered, 0.95});
  const auto p = induced_transition_matrix(ic.positions.mdp, PolicyTable::uniform(25, 4));
  EXPECT_TRUE(check_reversibility(p).pass);
  const Matrix cells = Matrix::Random(25, 3);
  const Matrix lifted = ic.lift(cells);
  EXPECT_EQ(lifted.rows(), 400);
  EXPECT_EQ(lifted.row(ic.state_of(7, 5)), cells.row(7));
  EXPECT_THROW(ic.lift(Matrix::Zero(3, 1)), DimensionError);
}

TEST(ItemCollector, RejectsBadConfigs) {
  EXPECT_THROW(item_collector({0, 1, 50, 0, ItemRewardScheme::kOrdered, 0.95}), DomainError);
  EXPECT_THROW(item_collector({3, 5, 50, 0, ItemRewardScheme::kOrdered, 0.95}), DomainError);
  EXPECT_THROW(item_collector({5, 2, 0, 0, ItemRewardScheme::kOrdered, 0.95}), DomainError);
  EXPECT_THROW(item_collector({10, 11, 50, 0, ItemRewardScheme::kOrdered, 0.95}), DomainError);
}
