#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lapkey/error.hpp"

namespace lapkey {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kSymmetryTol = 1e-10;

struct Successor {
  int state;
  double prob;
};

/// Finite MDP with sparse transition rows p(.|s,a), a terminal mask and a discount.
///
/// Terminal states are absorbing self-loops. Planning code never bootstraps
/// through them; chain construction keeps them so P stays row-stochastic.
class TabularMdp {
 public:
  TabularMdp(int n_states, int n_actions, std::vector<std::vector<Successor>> rows,
             std::vector<bool> terminal, double gamma)
      : n_states_(n_states),
        n_actions_(n_actions),
        rows_(std::move(rows)),
        terminal_(std::move(terminal)),
        gamma_(gamma) {
    validate();
  }

  /// Build from a dense tensor indexed [s][a][s'].
  static TabularMdp from_dense(const std::vector<std::vector<std::vector<double>>>& p,
                               std::vector<bool> terminal, double gamma) {
    const int n = static_cast<int>(p.size());
    if (n == 0) throw DimensionError("transition tensor is empty");
    const int na = static_cast<int>(p[0].size());
    std::vector<std::vector<Successor>> rows;
    rows.reserve(static_cast<std::size_t>(n) * na);
    for (int s = 0; s < n; ++s) {
      if (static_cast<int>(p[s].size()) != na)
        throw DimensionError("transition[" + std::to_string(s) + "] has " +
                             std::to_string(p[s].size()) + " actions, expected " +
                             std::to_string(na));
      for (int a = 0; a < na; ++a) {
        if (static_cast<int>(p[s][a].size()) != n)
          throw DimensionError("transition[" + std::to_string(s) + "][" + std::to_string(a) +
                               "] has length " + std::to_string(p[s][a].size()) +
                               ", expected " + std::to_string(n));
        std::vector<Successor> row;
        for (int t = 0; t < n; ++t)
          if (p[s][a][t] != 0.0) row.push_back({t, p[s][a][t]});
        rows.push_back(std::move(row));
      }
    }
    return TabularMdp(n, na, std::move(rows), std::move(terminal), gamma);
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double gamma() const { return gamma_; }
  bool is_terminal(int s) const { return terminal_[static_cast<std::size_t>(s)]; }
  const std::vector<bool>& terminal() const { return terminal_; }

  std::span<const Successor> successors(int s, int a) const {
    return rows_[static_cast<std::size_t>(s) * n_actions_ + a];
  }

  double prob(int s, int a, int next) const {
    double p = 0.0;
    for (const auto& succ : successors(s, a))
      if (succ.state == next) p += succ.prob;
    return p;
  }

  std::vector<std::vector<std::vector<double>>> dense() const {
    std::vector<std::vector<std::vector<double>>> p(
        n_states_, std::vector<std::vector<double>>(n_actions_, std::vector<double>(n_states_, 0.0)));
    for (int s = 0; s < n_states_; ++s)
      for (int a = 0; a < n_actions_; ++a)
        for (const auto& succ : successors(s, a)) p[s][a][succ.state] += succ.prob;
    return p;
  }

  /// Copy with the given states made terminal (and therefore absorbing).
  TabularMdp with_terminals(const std::vector<int>& states) const {
    auto rows = rows_;
    auto term = terminal_;
    for (int s : states) {
      check_state(s);
      term[static_cast<std::size_t>(s)] = true;
      for (int a = 0; a < n_actions_; ++a)
        rows[static_cast<std::size_t>(s) * n_actions_ + a] = {{s, 1.0}};
    }
    return TabularMdp(n_states_, n_actions_, std::move(rows), std::move(term), gamma_);
  }

  TabularMdp with_gamma(double gamma) const {
    return TabularMdp(n_states_, n_actions_, rows_, terminal_, gamma);
  }

  int sample_next(int s, int a, Rng& rng) const {
    const auto row = successors(s, a);
    if (row.size() == 1) return row[0].state;
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (const auto& succ : row) {
      if (u < succ.prob) return succ.state;
      u -= succ.prob;
    }
    return row.back().state;
  }

  void check_state(int s) const {
    if (s < 0 || s >= n_states_)
      throw DomainError("state " + std::to_string(s) + " out of range [0, " +
                        std::to_string(n_states_) + ")");
  }

 private:
  void validate() {
    if (n_states_ < 1) throw DimensionError("n_states must be >= 1");
    if (n_actions_ < 1) throw DimensionError("n_actions must be >= 1");
    if (rows_.size() != static_cast<std::size_t>(n_states_) * n_actions_)
      throw DimensionError("expected " + std::to_string(n_states_ * n_actions_) +
                           " transition rows, got " + std::to_string(rows_.size()));
    if (terminal_.size() != static_cast<std::size_t>(n_states_))
      throw DimensionError("terminal mask has length " + std::to_string(terminal_.size()) +
                           ", expected " + std::to_string(n_states_));
    if (!(gamma_ >= 0.0 && gamma_ < 1.0))
      throw DomainError("gamma must lie in [0, 1), got " + std::to_string(gamma_));
    for (int s = 0; s < n_states_; ++s) {
      for (int a = 0; a < n_actions_; ++a) {
        auto& row = rows_[static_cast<std::size_t>(s) * n_actions_ + a];
        std::sort(row.begin(), row.end(),
                  [](const Successor& x, const Successor& y) { return x.state < y.state; });
        // merge duplicates so successors() is canonical
        std::vector<Successor> merged;
        for (const auto& succ : row) {
          if (succ.state < 0 || succ.state >= n_states_)
            throw DomainError(where(s, a) + ": successor " + std::to_string(succ.state) +
                              " out of range");
          if (!(succ.prob >= 0.0) || !std::isfinite(succ.prob))
            throw DomainError(where(s, a) + ": probability must be finite and nonnegative");
          if (!merged.empty() && merged.back().state == succ.state)
            merged.back().prob += succ.prob;
          else if (succ.prob > 0.0)
            merged.push_back(succ);
        }
        row = std::move(merged);
        double sum = 0.0;
        for (const auto& succ : row) sum += succ.prob;
        if (std::abs(sum - 1.0) > kStochasticTol) {
          std::ostringstream os;
          os << where(s, a) << ": row sums to " << sum << ", expected 1";
          throw DomainError(os.str());
        }
        if (terminal_[static_cast<std::size_t>(s)] &&
            !(row.size() == 1 && row[0].state == s))
          throw DomainError(where(s, a) + ": terminal state is not absorbing");
      }
    }
  }

  static std::string where(int s, int a) {
    return "transition[" + std::to_string(s) + "][" + std::to_string(a) + "]";
  }

  int n_states_;
  int n_actions_;
  std::vector<std::vector<Successor>> rows_;
  std::vector<bool> terminal_;
  double gamma_;
};

/// Stochastic policy pi(a|s), one row per state.
struct PolicyTable {
  Matrix probs;

  PolicyTable() = default;
  explicit PolicyTable(Matrix p) : probs(std::move(p)) {
    for (Eigen::Index s = 0; s < probs.rows(); ++s) {
      if ((probs.row(s).array() < 0.0).any() || (probs.row(s).array() > 1.0).any())
        throw DomainError("policy row " + std::to_string(s) + " has entries outside [0, 1]");
      if (std::abs(probs.row(s).sum() - 1.0) > kStochasticTol)
        throw DomainError("policy row " + std::to_string(s) + " does not sum to 1");
    }
  }

  static PolicyTable uniform(int n_states, int n_actions) {
    return PolicyTable(Matrix::Constant(n_states, n_actions, 1.0 / n_actions));
  }

  static PolicyTable deterministic(const std::vector<int>& actions, int n_actions) {
    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
      if (actions[s] < 0 || actions[s] >= n_actions)
        throw DomainError("action " + std::to_string(actions[s]) + " out of range");
      p(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    }
    return PolicyTable(std::move(p));
  }

  int n_states() const { return static_cast<int>(probs.rows()); }
  int n_actions() const { return static_cast<int>(probs.cols()); }

  /// Most probable action per state (lowest index on ties).
  std::vector<int> argmax_actions() const {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index s = 0; s < probs.rows(); ++s) {
      Eigen::Index best = 0;
      for (Eigen::Index a = 1; a < probs.cols(); ++a)
        if (probs(s, a) > probs(s, best)) best = a;
      out[static_cast<std::size_t>(s)] = static_cast<int>(best);
    }
    return out;
  }
};

/// Policy-induced chain P_pi(s, s').
struct TransitionMatrix {
  Matrix rows;
  bool symmetric = false;

  int n_states() const { return static_cast<int>(rows.rows()); }
};

struct SymmetryReport {
  double max_asymmetry = 0.0;
  bool pass = true;
  int row = -1;  // offending pair when !pass
  int col = -1;
};

struct LaplacianMatrix {
  Matrix entries;

  int n_states() const { return static_cast<int>(entries.rows()); }
};

inline SymmetryReport check_reversibility(const TransitionMatrix& p, double tol = kSymmetryTol) {
  SymmetryReport rep;
  const auto n = p.rows.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = std::abs(p.rows(i, j) - p.rows(j, i));
      if (d > rep.max_asymmetry) {
        rep.max_asymmetry = d;
        rep.row = static_cast<int>(i);
        rep.col = static_cast<int>(j);
      }
    }
  }
  rep.pass = rep.max_asymmetry <= tol;
  if (rep.pass) rep.row = rep.col = -1;
  return rep;
}

inline TransitionMatrix induced_transition_matrix(const TabularMdp& mdp, const PolicyTable& policy) {
  if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
    throw DimensionError("policy shape " + std::to_string(policy.n_states()) + "x" +
                         std::to_string(policy.n_actions()) + " does not match MDP " +
                         std::to_string(mdp.n_states()) + "x" + std::to_string(mdp.n_actions()));
  TransitionMatrix p;
  p.rows = Matrix::Zero(mdp.n_states(), mdp.n_states());
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double pa = policy.probs(s, a);
      if (pa == 0.0) continue;
      for (const auto& succ : mdp.successors(s, a)) p.rows(s, succ.state) += pa * succ.prob;
    }
  p.symmetric = check_reversibility(p).pass;
  return p;
}

struct Symmetrized {
  TransitionMatrix matrix;
  double max_row_sum_deviation = 0.0;
};

/// (P + P^T) / 2. Opt-in escape hatch: rows may stop summing to one.
inline Symmetrized symmetrize(const TransitionMatrix& p) {
  Symmetrized out;
  out.matrix.rows = 0.5 * (p.rows + p.rows.transpose());
  out.matrix.symmetric = true;
  out.max_row_sum_deviation =
      (out.matrix.rows.rowwise().sum().array() - 1.0).abs().maxCoeff();
  std::ostringstream os;
  os << "chain symmetrized; max row-sum deviation " << out.max_row_sum_deviation;
  warn(os.str());
  return out;
}

/// L = I - P. Requires a symmetric chain (verified or explicitly symmetrized).
inline LaplacianMatrix build_laplacian(const TransitionMatrix& p, double tol = kSymmetryTol) {
  if (p.rows.rows() != p.rows.cols()) throw DimensionError("transition matrix is not square");
  if (!p.symmetric) {
    const auto rep = check_reversibility(p, tol);
    if (!rep.pass) {
      std::ostringstream os;
      os << "chain is not symmetric: |P(" << rep.row << "," << rep.col << ") - P(" << rep.col
         << "," << rep.row << ")| = " << rep.max_asymmetry << " > " << tol
         << " (symmetrize explicitly to proceed)";
      throw ReversibilityError(os.str());
    }
  }
  LaplacianMatrix l;
  l.entries = Matrix::Identity(p.rows.rows(), p.rows.cols()) - p.rows;
  return l;
}

}  // namespace lapkey
