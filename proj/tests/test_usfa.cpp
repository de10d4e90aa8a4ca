#include <gtest/gtest.h>

#include <cmath>

#include "lapkey/envs.hpp"
#include "lapkey/planning.hpp"
#include "lapkey/usfa.hpp"
#include "test_util.hpp"

using namespace lapkey;

namespace {

struct Fixture {
  GridWorld g = four_rooms_goal_task();
  TabularMdp task = g.task();
  SpectralBasis basis =
      eigendecompose(build_laplacian(induced_transition_matrix(g.mdp, PolicyTable::uniform(104, 4))));
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST(Features, TakesLeadingColumns) {
  const auto& f = fixture();
  const Matrix phi = features_from_basis(f.basis, 6);
  EXPECT_EQ(phi, f.basis.eigenvectors.leftCols(6));
  EXPECT_LE(orthonormality_defect(phi), 1e-10);
  EXPECT_THROW(features_from_basis(f.basis, 0), DomainError);
  EXPECT_THROW(features_from_basis(f.basis, 105), DomainError);
}

TEST(SfIteration, ZeroWeightGivesZeroValues) {
  const auto& f = fixture();
  const auto sf = sf_iteration(f.task, features_from_basis(f.basis, 4), WeightVector(Vector::Zero(4)));
  EXPECT_EQ(sf.q().cwiseAbs().maxCoeff(), 0.0);
  for (int a : sf.actions) EXPECT_EQ(a, 0);
}

TEST(SfIteration, CompleteFeaturesRecoverOptimalValues) {
  const auto& f = fixture();
  const Matrix phi = f.basis.eigenvectors;
  const auto r = f.g.goal_reward();
  const auto sf = sf_iteration(f.task, phi, zero_shot_weight(r, phi));
  const auto vt = value_iteration(f.task, r);
  EXPECT_LE((sf.q().rowwise().maxCoeff() - vt.v).cwiseAbs().maxCoeff(), 10 * 1e-8);
  const Vector vpi = policy_evaluation(f.task, r, sf.actions);
  EXPECT_LE((vpi - vt.v).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(SfIteration, PsiIsBellmanConsistentForItsPolicy) {
  const auto& f = fixture();
  const Matrix phi = features_from_basis(f.basis, 6);
  for (int i = 0; i < 5; ++i) {
    const auto sf = sf_iteration(f.task, phi, WeightVector(fixtures::random_signal(6, 60 + i)));
    const Matrix backup = detail::sf_backup(f.task, phi, sf.psi, sf.actions);
    EXPECT_LE((backup - sf.psi).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(sf.policy().argmax_actions(), sf.actions);
  }
}

TEST(SfIteration, PolicyIsInvariantToPositiveScaling) {
  const auto& f = fixture();
  const Matrix phi = features_from_basis(f.basis, 6);
  for (int i = 0; i < 5; ++i) {
    const Vector w = fixtures::random_signal(6, 90 + i);
    const auto a = sf_iteration(f.task, phi, WeightVector(w));
    const auto b = sf_iteration(f.task, phi, WeightVector(3.0 * w));
    EXPECT_EQ(a.actions, b.actions);
    EXPECT_LE((3.0 * a.q() - b.q()).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(SfIteration, RejectsMismatchedShapes) {
  const auto& f = fixture();
  const Matrix phi = features_from_basis(f.basis, 3);
  EXPECT_THROW(sf_iteration(f.task, phi, WeightVector(Vector::Zero(4))), DimensionError);
  EXPECT_THROW(sf_iteration(f.task, Matrix::Zero(5, 3), WeightVector(Vector::Zero(3))), DimensionError);
  EXPECT_THROW(sf_iteration(f.task, phi, WeightVector(Vector::Zero(3)), 0.0), DomainError);
}

TEST(ZeroShot, ConstantRewardLoadsOnFirstEigenvector) {
  const auto& f = fixture();
  const double c = 2.5;
  const auto w = zero_shot_weight(RewardTable(Vector::Constant(104, c)), f.basis.eigenvectors);
  EXPECT_NEAR(w.w(0), c * std::sqrt(104.0), 1e-9);
  EXPECT_LE(w.w.tail(103).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ZeroShot, NonOrthonormalFeaturesUseLeastSquares) {
  const auto& f = fixture();
  const Matrix phi = 2.0 * features_from_basis(f.basis, 5);
  const Vector r = fixtures::random_signal(104, 4);
  const auto w = zero_shot_weight(RewardTable(r), phi);
  EXPECT_LE((w.w - 0.5 * f.basis.eigenvectors.leftCols(5).transpose() * r).cwiseAbs().maxCoeff(), 1e-10);
  Matrix dup(104, 2);
  dup << phi.col(0), phi.col(0);
  EXPECT_THROW(zero_shot_weight(RewardTable(r), dup), DomainError);
  EXPECT_THROW(zero_shot_weight(RewardTable(Vector::Ones(3)), phi), DimensionError);
}

TEST(ZeroShot, ExhaustiveSamplesMatchExactWeights) {
  const auto& f = fixture();
  const Matrix phi = features_from_basis(f.basis, 6);
  const Vector r = fixtures::random_signal(104, 8);
  std::vector<RewardSample> samples;
  for (int s = 0; s < 104; ++s) samples.push_back({s, r(s)});
  const auto sampled = zero_shot_weight_sampled(samples, phi);
  EXPECT_LE((sampled.w - zero_shot_weight(RewardTable(r), phi).w).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ZeroShot, ResampledEstimateConvergesToExact) {
  const auto& f = fixture();
  const Matrix phi = features_from_basis(f.basis, 6);
  const Vector r = fixtures::random_signal(104, 9);
  std::vector<RewardSample> samples;
  for (int s = 0; s < 104; ++s) samples.push_back({s, r(s)});
  const Vector exact = zero_shot_weight(RewardTable(r), phi).w;
  const Vector est = zero_shot_weight_sampled(samples, phi, 400000, 1).w;
  EXPECT_LE((est - exact).norm() / exact.norm(), 0.05);
  EXPECT_EQ(est, zero_shot_weight_sampled(samples, phi, 400000, 1).w);
}

TEST(ZeroShot, SampledRejectsBadInput) {
  const Matrix phi = Matrix::Identity(3, 2);
  EXPECT_THROW(zero_shot_weight_sampled({}, phi), DomainError);
  EXPECT_THROW(zero_shot_weight_sampled({{5, 1.0}}, phi), DomainError);
  EXPECT_THROW(zero_shot_weight_sampled({{0, 1.0}}, phi, 0, 1), DomainError);
}

TEST(UsfaTable, MemoizesByWeight) {
  const auto& f = fixture();
  UsfaTable table(f.task, features_from_basis(f.basis, 4));
  const WeightVector w((Vector(4) << 1, 0, -1, 0.5).finished());
  const auto a = table.solve(w);
  const auto b = table.solve(WeightVector(w.w));
  EXPECT_EQ(a.get(), b.get());
  EXPECT_EQ(table.cached(), 1u);
  table.solve(WeightVector(2.0 * w.w));
  EXPECT_EQ(table.cached(), 2u);
  EXPECT_THROW(UsfaTable(f.task, Matrix::Zero(3, 2)), DimensionError);
}
