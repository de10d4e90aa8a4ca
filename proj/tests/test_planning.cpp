#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "lapkey/envs.hpp"
#include "lapkey/planning.hpp"
#include "test_util.hpp"

using namespace lapkey;

namespace {

// v* as the elementwise max over every deterministic policy, each solved exactly.
Vector brute_force_optimum(const TabularMdp& mdp, const RewardTable& r) {
  const int n = mdp.n_states();
  const int na = mdp.n_actions();
  std::vector<int> free;
  for (int s = 0; s < n; ++s)
    if (!mdp.is_terminal(s)) free.push_back(s);
  std::vector<int> acts(static_cast<std::size_t>(n), 0);
  Vector best = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  long total = 1;
  for (std::size_t i = 0; i < free.size(); ++i) total *= na;
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (int s : free) {
      acts[static_cast<std::size_t>(s)] = static_cast<int>(c % na);
      c /= na;
    }
    Matrix a = Matrix::Identity(n, n);
    Vector b = Vector::Zero(n);
    for (int s : free)
      for (const auto& succ : mdp.successors(s, acts[static_cast<std::size_t>(s)])) {
        b(s) += succ.prob * r.values(succ.state);
        if (!mdp.is_terminal(succ.state)) a(s, succ.state) -= mdp.gamma() * succ.prob;
      }
    best = best.cwiseMax(a.partialPivLu().solve(b));
  }
  return best;
}

GridWorld small_grid(double gamma) {
  GridSpec spec;
  spec.height = 3;
  spec.width = 3;
  spec.gamma = gamma;
  spec.goals.push_back({{2, 2}, 1.0});
  return build_grid(spec);
}

}  // namespace

TEST(ValueIteration, ConstantRewardGeometricSeries) {
  TabularMdp m(1, 1, {{{0, 1.0}}}, {false}, 0.9);
  const auto vt = value_iteration(m, RewardTable(Vector::Ones(1)));
  EXPECT_NEAR(vt.v(0), 10.0, 1e-8);
}

TEST(ValueIteration, OneStepToTerminalGoal) {
  TabularMdp m(2, 1, {{{1, 1.0}}, {{1, 1.0}}}, {false, true}, 0.9);
  const auto vt = value_iteration(m, RewardTable((Vector(2) << 0, 1).finished()));
  EXPECT_NEAR(vt.v(0), 1.0, 1e-12);
  EXPECT_EQ(vt.v(1), 0.0);
}

TEST(ValueIteration, MatchesPolicyEnumerationOnSmallGrid) {
  const auto g = small_grid(0.9);
  const auto task = g.task();
  const auto r = g.goal_reward();
  const Vector oracle = brute_force_optimum(task, r);
  const auto vt = value_iteration(task, r);
  EXPECT_LE((vt.v - oracle).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ValueIteration, MatchesPolicyEnumerationOnRandomMdps) {
  for (int trial = 0; trial < 5; ++trial) {
    const auto mdp = fixtures::random_mdp(6, 3, 77 + trial, 0.8);
    const RewardTable r(fixtures::random_signal(6, trial));
    EXPECT_LE((value_iteration(mdp, r).v - brute_force_optimum(mdp, r)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ValueIteration, BellmanResidualAndPolicyConsistency) {
  const auto g = four_rooms_goal_task();
  const auto r = g.goal_reward();
  const auto task = g.task();
  const auto vt = value_iteration(task, r);
  EXPECT_LE(bellman_residual(task, r, vt.v), 1e-9);
  const Vector vpi = policy_evaluation(task, r, greedy_actions(vt.q));
  EXPECT_LE((vpi - vt.v).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ValueIteration, RejectsBadTolerance) {
  TabularMdp m(1, 1, {{{0, 1.0}}}, {false}, 0.9);
  EXPECT_THROW(value_iteration(m, RewardTable(Vector::Ones(1)), 0.0), DomainError);
  EXPECT_THROW(value_iteration(m, RewardTable(Vector::Ones(1)), 1e-10, 3), NumericalError);
}

TEST(GreedyActions, TiesGoToLowestIndex) {
  Matrix q(2, 3);
  q << 1, 1, 0, 0, 2, 2;
  EXPECT_EQ(greedy_actions(q), (std::vector<int>{0, 1}));
}

TEST(PolicyEvaluation, ShapeMismatchThrows) {
  TabularMdp m(1, 1, {{{0, 1.0}}}, {false}, 0.9);
  EXPECT_THROW(policy_evaluation(m, RewardTable(Vector::Ones(1)), {0, 0}), DimensionError);
}

TEST(FiniteHorizon, CountsRewardsWithinHorizon) {
  TabularMdp m(1, 1, {{{0, 1.0}}}, {false}, 0.9);
  EXPECT_DOUBLE_EQ(finite_horizon_value(m, RewardTable(Vector::Ones(1)), 7)(0), 7.0);
}

TEST(Theorem1, BoundChainHoldsOnRandomRewards) {
  const auto g = four_rooms_goal_task();
  const auto chain = induced_transition_matrix(g.mdp, PolicyTable::uniform(g.n_states(), 4));
  const auto basis = eigendecompose(build_laplacian(chain));
  const auto task = g.task();
  for (int i = 0; i < 5; ++i) {
    const RewardTable r(fixtures::random_signal(104, 20 + i));
    for (const auto& rep : theorem1_sweep(task, chain, basis, r, {1, 2, 5, 10, 30, 60, 104})) {
      EXPECT_LE(rep.value_error, rep.bound_tight + 1e-8);
      EXPECT_LE(rep.bound_tight, rep.bound_loose + 1e-8);
    }
  }
}

TEST(Theorem1, LooseBoundIsInfiniteAtZeroEigenvalue) {
  const auto g = four_rooms_goal_task();
  const auto rep = theorem1_check(g.mdp, PolicyTable::uniform(g.n_states(), 4), g.goal_reward(), 1,
                                  kValueTol, g.goal_states());
  EXPECT_TRUE(std::isinf(rep.bound_loose));
}

TEST(Theorem1, InSpanRewardHasNoError) {
  const auto g = four_rooms_goal_task();
  const auto chain = induced_transition_matrix(g.mdp, PolicyTable::uniform(g.n_states(), 4));
  const auto basis = eigendecompose(build_laplacian(chain));
  const RewardTable r(basis.eigenvectors.leftCols(8) * fixtures::random_signal(8, 3));
  const auto rep = theorem1_check(g.task(), chain, basis, r, 8);
  EXPECT_LE(rep.value_error, 1e-8);
  EXPECT_LE(rep.reward_error, 1e-10);
}

TEST(Theorem1, CompleteBasisRecoversValues) {
  const auto g = four_rooms_goal_task();
  const auto rep = theorem1_check(g.mdp, PolicyTable::uniform(g.n_states(), 4), g.goal_reward(), 104,
                                  kValueTol, g.goal_states());
  EXPECT_LE(rep.value_error, 1e-8);
  EXPECT_LE(rep.reward_error, 1e-10);
}

TEST(Theorem1, RejectsBadInputs) {
  const auto g = four_rooms_goal_task();
  const auto pol = PolicyTable::uniform(g.n_states(), 4);
  EXPECT_THROW(theorem1_check(g.mdp, pol, g.goal_reward(), 0), DomainError);
  EXPECT_THROW(theorem1_check(g.mdp, pol, g.goal_reward(), 105), DomainError);
  EXPECT_THROW(theorem1_check(g.mdp, pol, RewardTable(Vector::Ones(3)), 2), DimensionError);
}

TEST(GapCutoffs, SkipsDegenerateCuts) {
  SpectralBasis b;
  b.eigenvalues = (Vector(5) << 0.0, 0.5, 0.5, 0.5, 1.0).finished();
  b.eigenvectors = Matrix::Identity(5, 5);
  b.n_states = 5;
  EXPECT_EQ(gap_cutoffs(b, 1, 5), (std::vector<int>{1, 4, 5}));
}
