#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "lapkey/error.hpp"
#include "lapkey/mdp.hpp"
#include "lapkey/spectral.hpp"

namespace lapkey {

inline constexpr double kValueTol = 1e-10;
inline constexpr int kValueMaxIters = 100000;
inline constexpr double kBoundSlack = 1e-8;
// eigenvalues at or below this are treated as the zero eigenvalue of a connected chain
inline constexpr double kZeroEigenvalue = 1e-10;

/// Anything that prices a transition (s, a, s').
template <class R>
concept RewardModel = requires(const R& r, int s, int a, int next) {
  { r(s, a, next) } -> std::convertible_to<double>;
};

/// Reward received on entering a state.
struct RewardTable {
  Vector values;

  RewardTable() = default;
  explicit RewardTable(Vector v) : values(std::move(v)) {
    if (!values.allFinite()) throw DomainError("reward table has non-finite entries");
  }

  double operator()(int /*s*/, int /*a*/, int next) const { return values(next); }
  int n_states() const { return static_cast<int>(values.size()); }
};

struct ValueTable {
  Vector v;
  Matrix q;  // n_states x n_actions
  int iterations = 0;
};

namespace detail {

template <RewardModel R>
Matrix bellman_q(const TabularMdp& mdp, const R& reward, const Vector& v) {
  Matrix q = Matrix::Zero(mdp.n_states(), mdp.n_actions());
  const double g = mdp.gamma();
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.n_actions(); ++a) {
      double acc = 0.0;
      for (const auto& succ : mdp.successors(s, a)) {
        const double boot = mdp.is_terminal(succ.state) ? 0.0 : g * v(succ.state);
        acc += succ.prob * (reward(s, a, succ.state) + boot);
      }
      q(s, a) = acc;
    }
  }
  return q;
}

}  // namespace detail

/// Optimal values for reward paid on the successor state; terminal successors
/// end the episode and v(terminal) = 0.
template <RewardModel R>
ValueTable value_iteration(const TabularMdp& mdp, const R& reward, double tol = kValueTol,
                           int max_iters = kValueMaxIters) {
  if (!(tol > 0.0)) throw DomainError("value iteration tolerance must be positive");
  Vector v = Vector::Zero(mdp.n_states());
  double residual = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < max_iters) {
    ++it;
    const Vector next = detail::bellman_q(mdp, reward, v).rowwise().maxCoeff();
    residual = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (!std::isfinite(residual)) break;
    if (residual <= tol) {
      ValueTable out;
      out.q = detail::bellman_q(mdp, reward, v);
      out.v = out.q.rowwise().maxCoeff();
      out.iterations = it;
      return out;
    }
  }
  std::ostringstream os;
  os << "value iteration did not converge in " << it << " iterations (residual " << residual << ")";
  throw NumericalError(os.str());
}

/// Evaluate a deterministic policy given as one action per state.
template <RewardModel R>
Vector policy_evaluation(const TabularMdp& mdp, const R& reward, const std::vector<int>& actions,
                         double tol = kValueTol, int max_iters = kValueMaxIters) {
  if (static_cast<int>(actions.size()) != mdp.n_states())
    throw DimensionError("policy covers " + std::to_string(actions.size()) + " states, expected " +
                         std::to_string(mdp.n_states()));
  Vector v = Vector::Zero(mdp.n_states());
  const double g = mdp.gamma();
  for (int it = 0; it < max_iters; ++it) {
    Vector next = Vector::Zero(mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s) {
      if (mdp.is_terminal(s)) continue;
      const int a = actions[static_cast<std::size_t>(s)];
      double acc = 0.0;
      for (const auto& succ : mdp.successors(s, a)) {
        const double boot = mdp.is_terminal(succ.state) ? 0.0 : g * v(succ.state);
        acc += succ.prob * (reward(s, a, succ.state) + boot);
      }
      next(s) = acc;
    }
    const double residual = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (residual <= tol) return v;
  }
  throw NumericalError("policy evaluation did not converge");
}

/// Best undiscounted return collectable within `horizon` steps, per start state.
template <RewardModel R>
Vector finite_horizon_value(const TabularMdp& mdp, const R& reward, int horizon) {
  Vector v = Vector::Zero(mdp.n_states());
  for (int t = 0; t < horizon; ++t) {
    Vector next = Vector::Zero(mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s) {
      if (mdp.is_terminal(s)) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.n_actions(); ++a) {
        double acc = 0.0;
        for (const auto& succ : mdp.successors(s, a))
          acc += succ.prob * (reward(s, a, succ.state) + (mdp.is_terminal(succ.state) ? 0.0 : v(succ.state)));
        best = std::max(best, acc);
      }
      next(s) = best;
    }
    v = std::move(next);
  }
  return v;
}

/// Sup-norm Bellman optimality residual of v.
template <RewardModel R>
double bellman_residual(const TabularMdp& mdp, const R& reward, const Vector& v) {
  return (detail::bellman_q(mdp, reward, v).rowwise().maxCoeff() - v).cwiseAbs().maxCoeff();
}

/// Deterministic argmax policy; ties go to the lowest action index.
inline std::vector<int> greedy_actions(const Matrix& q) {
  std::vector<int> out(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < q.cols(); ++a)
      if (q(s, a) > q(s, best)) best = a;
    out[static_cast<std::size_t>(s)] = static_cast<int>(best);
  }
  return out;
}

inline PolicyTable greedy_policy(const ValueTable& values) {
  if (values.q.size() == 0) throw DomainError("value table has no action values");
  return PolicyTable::deterministic(greedy_actions(values.q), static_cast<int>(values.q.cols()));
}

struct BoundReport {
  int k = 0;
  double value_error = 0.0;   // ||v* - v*_k||_inf
  double reward_error = 0.0;  // ||r - r_k||_inf
  double bound_tight = 0.0;   // ||r - r_k||_inf / (1 - gamma)
  double bound_loose = 0.0;   // ||r||_G / ((1 - gamma) sqrt(lambda_k)); +inf when lambda_k <= 0
  double graph_norm = 0.0;
  bool canonical_cut = true;
};

/// Compare optimal values under r and its rank-k reconstruction on `task`,
/// where `basis` and `chain` describe the reward-free dynamics.
/// `optimal` may carry a precomputed value_iteration(task, r) to reuse across k.
inline BoundReport theorem1_check(const TabularMdp& task, const TransitionMatrix& chain,
                                  const SpectralBasis& basis, const RewardTable& r, int k,
                                  double tol = kValueTol, const ValueTable* optimal = nullptr) {
  if (r.n_states() != task.n_states() || basis.n_states != task.n_states())
    throw DimensionError("reward, basis and MDP disagree on the number of states");
  if (k < 1 || k > basis.width())
    throw DomainError("k = " + std::to_string(k) + " outside [1, " + std::to_string(basis.width()) +
                      "]");
  const auto phi = basis.eigenvectors.leftCols(k);
  const RewardTable rk(phi * (phi.transpose() * r.values));

  ValueTable local;
  if (!optimal) {
    local = value_iteration(task, r, tol);
    optimal = &local;
  }
  const ValueTable approx = value_iteration(task, rk, tol);

  BoundReport rep;
  rep.k = k;
  rep.canonical_cut = is_canonical_cut(basis, k);
  rep.value_error = (optimal->v - approx.v).cwiseAbs().maxCoeff();
  rep.reward_error = (r.values - rk.values).cwiseAbs().maxCoeff();
  const double horizon = 1.0 / (1.0 - task.gamma());
  rep.bound_tight = rep.reward_error * horizon;
  rep.graph_norm = graph_norm(chain, r.values).norm;
  const double lambda_k = basis.eigenvalues(k - 1);
  rep.bound_loose = lambda_k > kZeroEigenvalue ? rep.graph_norm * horizon / std::sqrt(lambda_k)
                                   : std::numeric_limits<double>::infinity();

  if (rep.value_error > rep.bound_tight + kBoundSlack ||
      rep.bound_tight > rep.bound_loose + kBoundSlack) {
    std::ostringstream os;
    os << "bound chain violated at k = " << k << ": value_error " << rep.value_error
       << ", bound_tight " << rep.bound_tight << ", bound_loose " << rep.bound_loose;
    throw InvariantViolation(os.str());
  }
  return rep;
}

/// Convenience form: builds the basis from the policy-induced chain of `dynamics`
/// and plans on `dynamics` with the given terminal states.
inline BoundReport theorem1_check(const TabularMdp& dynamics, const PolicyTable& policy,
                                  const RewardTable& r, int k, double tol = kValueTol,
                                  const std::vector<int>& terminal_states = {}) {
  const auto chain = induced_transition_matrix(dynamics, policy);
  const auto basis = eigendecompose(build_laplacian(chain));
  return theorem1_check(dynamics.with_terminals(terminal_states), chain, basis, r, k, tol);
}

/// Cutoffs k in [k_min, k_max] that sit at a spectral gap.
inline std::vector<int> gap_cutoffs(const SpectralBasis& basis, int k_min, int k_max) {
  std::vector<int> out;
  for (int k = std::max(1, k_min); k <= std::min(k_max, basis.width()); ++k)
    if (is_canonical_cut(basis, k)) out.push_back(k);
  return out;
}

/// theorem1_check over every k in `ks`, sharing the optimal-value solve.
inline std::vector<BoundReport> theorem1_sweep(const TabularMdp& task, const TransitionMatrix& chain,
                                               const SpectralBasis& basis, const RewardTable& r,
                                               const std::vector<int>& ks, double tol = kValueTol) {
  const auto optimal = value_iteration(task, r, tol);
  std::vector<BoundReport> out;
  out.reserve(ks.size());
  for (int k : ks) out.push_back(theorem1_check(task, chain, basis, r, k, tol, &optimal));
  return out;
}

}  // namespace lapkey
