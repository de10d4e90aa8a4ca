#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <utility>
#include <vector>

#include "lapkey/error.hpp"
#include "lapkey/mdp.hpp"
#include "lapkey/planning.hpp"
#include "lapkey/spectral.hpp"

namespace lapkey {

inline constexpr double kSfTol = 1e-10;
inline constexpr int kSfMaxIters = 100000;

struct WeightVector {
  Vector w;

  WeightVector() = default;
  explicit WeightVector(Vector v) : w(std::move(v)) {
    if (!w.allFinite()) throw DomainError("weight vector has non-finite entries");
  }
  int dim() const { return static_cast<int>(w.size()); }
};

/// psi(s, a) for the policy that is greedy in w^T psi.
struct SuccessorFeatures {
  Matrix psi;  // (n_states * n_actions) x k, row s * n_actions + a
  int n_states = 0;
  int n_actions = 0;
  WeightVector conditioned_on;
  std::vector<int> actions;  // greedy action per state
  int iterations = 0;

  auto at(int s, int a) const { return psi.row(static_cast<Eigen::Index>(s) * n_actions + a); }

  /// q_w(s, a) = w^T psi(s, a).
  Matrix q() const {
    const Vector flat = psi * conditioned_on.w;
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), n_states, n_actions);
  }

  PolicyTable policy() const { return PolicyTable::deterministic(actions, n_actions); }
};

/// phi(s) = (e_1[s], ..., e_k[s]).
inline Matrix features_from_basis(const SpectralBasis& basis, int k) {
  if (k < 1 || k > basis.width())
    throw DomainError("k = " + std::to_string(k) + " outside [1, " + std::to_string(basis.width()) +
                      "]");
  return basis.eigenvectors.leftCols(k);
}

namespace detail {

// One SF backup: psi(s,a) = sum_s' p(s'|s,a) [phi(s') + gamma (1 - term(s')) psi(s', pi(s'))].
inline Matrix sf_backup(const TabularMdp& mdp, const Matrix& phi, const Matrix& psi,
                        const std::vector<int>& next_actions) {
  const int na = mdp.n_actions();
  const double g = mdp.gamma();
  Matrix out = Matrix::Zero(psi.rows(), psi.cols());
  for (int s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < na; ++a) {
      auto row = out.row(static_cast<Eigen::Index>(s) * na + a);
      for (const auto& succ : mdp.successors(s, a)) {
        row += succ.prob * phi.row(succ.state);
        if (!mdp.is_terminal(succ.state))
          row += succ.prob * g *
                 psi.row(static_cast<Eigen::Index>(succ.state) * na +
                         next_actions[static_cast<std::size_t>(succ.state)]);
      }
    }
  }
  return out;
}

inline std::vector<int> greedy_from_psi(const Matrix& psi, const Vector& w, int n_states, int na) {
  const Vector flat = psi * w;
  std::vector<int> out(static_cast<std::size_t>(n_states));
  for (int s = 0; s < n_states; ++s) {
    int best = 0;
    for (int a = 1; a < na; ++a)
      if (flat(s * na + a) > flat(s * na + best)) best = a;
    out[static_cast<std::size_t>(s)] = best;
  }
  return out;
}

}  // namespace detail

/// Successor features of the policy greedy in w^T psi.
///
/// First iterates the SF optimality backup until w^T psi moves by at most tol,
/// then evaluates psi exactly (to tol) under the resulting greedy policy so the
/// returned pair (psi, policy) is Bellman-consistent.
inline SuccessorFeatures sf_iteration(const TabularMdp& mdp, const Matrix& phi, const WeightVector& w,
                                      double tol = kSfTol, int max_iters = kSfMaxIters) {
  if (phi.rows() != mdp.n_states())
    throw DimensionError("feature map has " + std::to_string(phi.rows()) + " rows, expected " +
                         std::to_string(mdp.n_states()));
  if (w.dim() != phi.cols())
    throw DimensionError("weight vector has dimension " + std::to_string(w.dim()) + ", features " +
                         std::to_string(phi.cols()));
  if (!(tol > 0.0)) throw DomainError("SF tolerance must be positive");

  const int n = mdp.n_states();
  const int na = mdp.n_actions();
  Matrix psi = Matrix::Zero(static_cast<Eigen::Index>(n) * na, phi.cols());
  std::vector<int> actions(static_cast<std::size_t>(n), 0);

  int it = 0;
  double residual = std::numeric_limits<double>::infinity();
  for (; it < max_iters; ++it) {
    actions = detail::greedy_from_psi(psi, w.w, n, na);
    Matrix next = detail::sf_backup(mdp, phi, psi, actions);
    residual = ((next - psi) * w.w).cwiseAbs().maxCoeff();
    psi = std::move(next);
    if (residual <= tol) break;
  }
  if (!(residual <= tol)) {
    std::ostringstream os;
    os << "SF iteration did not converge in " << max_iters << " iterations (residual " << residual
       << ")";
    throw NumericalError(os.str());
  }

  actions = detail::greedy_from_psi(psi, w.w, n, na);
  for (;; ++it) {
    if (it >= 2 * max_iters) throw NumericalError("SF policy evaluation did not converge");
    Matrix next = detail::sf_backup(mdp, phi, psi, actions);
    const double delta = (next - psi).cwiseAbs().maxCoeff();
    psi = std::move(next);
    if (delta <= tol) break;
  }

  SuccessorFeatures sf;
  sf.psi = std::move(psi);
  sf.n_states = n;
  sf.n_actions = na;
  sf.conditioned_on = w;
  sf.actions = std::move(actions);
  sf.iterations = it + 1;
  return sf;
}

/// Max |phi^T phi - I|.
inline double orthonormality_defect(const Matrix& phi) {
  return (phi.transpose() * phi - Matrix::Identity(phi.cols(), phi.cols())).cwiseAbs().maxCoeff();
}

/// Least-squares weight of r on the feature columns (phi^T r for orthonormal phi).
inline WeightVector zero_shot_weight(const RewardTable& r, const Matrix& phi) {
  if (r.n_states() != phi.rows())
    throw DimensionError("reward has " + std::to_string(r.n_states()) + " states, features " +
                         std::to_string(phi.rows()));
  if (orthonormality_defect(phi) <= 1e-8) return WeightVector(phi.transpose() * r.values);

  Eigen::ColPivHouseholderQR<Matrix> qr(phi);
  qr.setThreshold(1e-10);
  if (qr.rank() < phi.cols())
    throw DomainError("feature matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                      " < " + std::to_string(phi.cols()) + ")");
  return WeightVector(qr.solve(r.values));
}

struct RewardSample {
  int next_state;
  double reward;
};

/// Monte Carlo zero-shot weight (n_states / N) sum_i r_i phi(s'_i) over all samples.
inline WeightVector zero_shot_weight_sampled(const std::vector<RewardSample>& samples,
                                             const Matrix& phi) {
  if (samples.empty()) throw DomainError("zero-shot estimation needs at least one sample");
  Vector acc = Vector::Zero(phi.cols());
  for (const auto& smp : samples) {
    if (smp.next_state < 0 || smp.next_state >= phi.rows())
      throw DomainError("sample state " + std::to_string(smp.next_state) + " out of range");
    acc += smp.reward * phi.row(smp.next_state).transpose();
  }
  return WeightVector(acc * (static_cast<double>(phi.rows()) / static_cast<double>(samples.size())));
}

/// As above, on n_samples draws (with replacement) from `samples`.
inline WeightVector zero_shot_weight_sampled(const std::vector<RewardSample>& samples,
                                             const Matrix& phi, int n_samples, std::uint64_t seed) {
  if (samples.empty()) throw DomainError("zero-shot estimation needs at least one sample");
  if (n_samples < 1) throw DomainError("n_samples must be positive");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<RewardSample> drawn;
  drawn.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) drawn.push_back(samples[pick(rng)]);
  return zero_shot_weight_sampled(drawn, phi);
}

/// Per-w successor features over fixed dynamics and features, memoized by the
/// bit pattern of w. Concurrent readers share; insertion is exclusive.
class UsfaTable {
 public:
  UsfaTable(TabularMdp mdp, Matrix phi, double tol = kSfTol, int max_iters = kSfMaxIters)
      : mdp_(std::move(mdp)), phi_(std::move(phi)), tol_(tol), max_iters_(max_iters) {
    if (phi_.rows() != mdp_.n_states()) throw DimensionError("feature rows do not match MDP states");
  }

  std::shared_ptr<const SuccessorFeatures> solve(const WeightVector& w) const {
    auto key = key_of(w);
    {
      std::shared_lock lock(mutex_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    auto sf = std::make_shared<const SuccessorFeatures>(sf_iteration(mdp_, phi_, w, tol_, max_iters_));
    std::unique_lock lock(mutex_);
    return memo_.emplace(std::move(key), std::move(sf)).first->second;
  }

  std::size_t cached() const {
    std::shared_lock lock(mutex_);
    return memo_.size();
  }

  const TabularMdp& mdp() const { return mdp_; }
  const Matrix& features() const { return phi_; }

 private:
  static std::vector<std::uint64_t> key_of(const WeightVector& w) {
    std::vector<std::uint64_t> key(static_cast<std::size_t>(w.dim()));
    for (int i = 0; i < w.dim(); ++i) key[static_cast<std::size_t>(i)] = std::bit_cast<std::uint64_t>(w.w(i));
    return key;
  }

  TabularMdp mdp_;
  Matrix phi_;
  double tol_;
  int max_iters_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::vector<std::uint64_t>, std::shared_ptr<const SuccessorFeatures>> memo_;
};

}  // namespace lapkey
