#pragma once

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lapkey/error.hpp"
#include "lapkey/mdp.hpp"
#include "lapkey/spectral.hpp"

namespace lapkey {

/// Optimizer settings. Step sizes act on the gradient taken in the
/// uniform-measure geometry, i.e. n_states times the Euclidean gradient.
struct AlloHyper {
  double barrier = 2.0;
  double step_primal = 0.05;
  double step_dual = 0.05;
  double gamma_allo = 0.5;  // geometric offset of positive pairs in sample mode
  int batch_size = 0;       // sample mode: 0 = all pairs every step, > 0 = minibatch SGD
  int trace_stride = 1;     // keep every trace_stride-th loss value
  double orth_tol = 1e-4;
  double loss_tol = 1e-8;
  double grad_tol = 1e-6;   // also required before declaring convergence
};

struct AlloState {
  Matrix u;      // n_states x k
  Matrix duals;  // k x k, lower triangle used
  double barrier = 2.0;
  double step_primal = 0.05;
  double step_dual = 0.05;
  long iteration = 0;

  int k() const { return static_cast<int>(u.cols()); }
  int n_states() const { return static_cast<int>(u.rows()); }
};

struct AlloReport {
  std::vector<double> loss_trace;
  double orthogonality_error = 0.0;
  std::vector<double> cosine_alignment;  // empty without a reference basis
  std::string measure = "uniform";       // "uniform" or "empirical"
  long iterations = 0;
  bool converged = false;
};

struct AlloLoss {
  double total = 0.0;
  double smooth = 0.0;
  double dual = 0.0;
  double barrier = 0.0;
};

struct AlloGradient {
  Matrix smooth;      // Euclidean gradient of the smoothness term
  Matrix constraint;  // Euclidean gradient of dual + barrier terms

  Matrix total() const { return smooth + constraint; }
};

namespace detail {

inline void check_allo_shapes(const Matrix& u, const Matrix& stopped, const Matrix& duals,
                              Eigen::Index n_l) {
  if (u.rows() != n_l)
    throw DimensionError("u has " + std::to_string(u.rows()) + " rows, Laplacian has " +
                         std::to_string(n_l));
  if (stopped.rows() != u.rows() || stopped.cols() != u.cols())
    throw DimensionError("stop-gradient copy does not match u");
  if (duals.rows() != u.cols() || duals.cols() != u.cols())
    throw DimensionError("duals must be k x k");
}

// Gram matrix <u_j, stop(u_k)> under a diagonal measure, minus identity.
inline Matrix constraint_residual(const Matrix& u, const Matrix& stopped, const Vector& measure) {
  const Eigen::Index k = u.cols();
  return u.transpose() * measure.asDiagonal() * stopped - Matrix::Identity(k, k);
}

inline Vector uniform_measure(Eigen::Index n) {
  return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

// Loss with a general smoothness operator and inner-product measure.
// `smooth_op` already includes any measure weighting of the smoothness term.
template <class Op>
AlloLoss allo_loss_impl(const Matrix& u, const Matrix& stopped, const Matrix& duals, double b,
                        const Op& smooth_op, const Vector& measure) {
  AlloLoss out;
  out.smooth = (u.transpose() * (smooth_op * u)).trace();
  const Matrix g = constraint_residual(u, stopped, measure);
  for (Eigen::Index j = 0; j < g.rows(); ++j)
    for (Eigen::Index k = 0; k <= j; ++k) {
      out.dual += duals(j, k) * g(j, k);
      out.barrier += b * g(j, k) * g(j, k);
    }
  out.total = out.smooth + out.dual + out.barrier;
  return out;
}

template <class Op>
AlloGradient allo_gradient_impl(const Matrix& u, const Matrix& stopped, const Matrix& duals,
                                double b, const Op& smooth_op, const Vector& measure) {
  const Eigen::Index k = u.cols();
  const Matrix g = constraint_residual(u, stopped, measure);
  Matrix coef = Matrix::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index c = 0; c <= j; ++c) coef(j, c) = duals(j, c) + 2.0 * b * g(j, c);
  AlloGradient out;
  out.smooth = 2.0 * (smooth_op * u);
  out.constraint = measure.asDiagonal() * (stopped * coef.transpose());
  return out;
}

inline double orthogonality_error(const Matrix& u, const Vector& measure) {
  return constraint_residual(u, u, measure).cwiseAbs().maxCoeff();
}

inline std::vector<double> alignment(const Matrix& u, const Matrix& reference) {
  std::vector<double> out;
  const Eigen::Index k = std::min(u.cols(), reference.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    const double denom = u.col(i).norm() * reference.col(i).norm();
    out.push_back(denom > 0.0 ? std::abs(u.col(i).dot(reference.col(i))) / denom : 0.0);
  }
  return out;
}

inline Eigen::SparseMatrix<double> to_sparse(const Matrix& m) {
  Eigen::SparseMatrix<double> out = m.sparseView(1.0, 0.0);
  out.makeCompressed();
  return out;
}

inline AlloState initial_state(int n, int k, const AlloHyper& hyper, std::uint64_t seed) {
  if (!(hyper.barrier > 0.0)) throw DomainError("barrier coefficient must be positive");
  if (!(hyper.step_primal > 0.0) || !(hyper.step_dual >= 0.0))
    throw DomainError("ALLO step sizes must be positive");
  if (k < 1 || k > n)
    throw DomainError("k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  AlloState st;
  st.u = Matrix::NullaryExpr(n, k, [&] { return unif(rng) * scale; });
  st.duals = Matrix::Zero(k, k);
  st.barrier = hyper.barrier;
  st.step_primal = hyper.step_primal;
  st.step_dual = hyper.step_dual;
  return st;
}

inline void check_reference(const std::optional<Matrix>& reference, int n) {
  if (reference && reference->rows() != n)
    throw DimensionError("reference basis has " + std::to_string(reference->rows()) +
                         " rows, expected " + std::to_string(n));
}

inline void diverged(long it) {
  throw NumericalError("ALLO diverged at iteration " + std::to_string(it));
}

// Full-batch primal descent / dual ascent until convergence or max_iters.
template <class Op>
AlloReport run_full_batch(AlloState& st, const Op& smooth_op, const Vector& measure,
                          const AlloHyper& hyper, long max_iters) {
  const double n = static_cast<double>(st.n_states());
  const int stride = std::max(1, hyper.trace_stride);
  AlloReport rep;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (long it = 0; it < max_iters; ++it) {
    const AlloLoss loss = allo_loss_impl(st.u, st.u, st.duals, st.barrier, smooth_op, measure);
    if (!std::isfinite(loss.total)) diverged(it);
    if (it % stride == 0) rep.loss_trace.push_back(loss.total);

    const Matrix g = constraint_residual(st.u, st.u, measure);
    const Matrix step = n * allo_gradient_impl(st.u, st.u, st.duals, st.barrier, smooth_op, measure).total();
    st.u -= st.step_primal * step;
    st.duals += st.step_dual * g.triangularView<Eigen::Lower>().toDenseMatrix();
    st.iteration = it + 1;
    if (!st.u.allFinite() || !st.duals.allFinite()) diverged(it);

    const double orth = g.cwiseAbs().maxCoeff();
    if (orth < hyper.orth_tol && std::abs(loss.total - prev) < hyper.loss_tol &&
        step.cwiseAbs().maxCoeff() < hyper.grad_tol) {
      rep.converged = true;
      break;
    }
    prev = loss.total;
  }
  rep.iterations = st.iteration;
  rep.orthogonality_error = orthogonality_error(st.u, measure);
  return rep;
}

}  // namespace detail

/// ALLO loss with the second slot of every constraint inner product held fixed
/// at `stopped` (pass u itself for the value seen by the optimizer).
inline AlloLoss allo_loss(const Matrix& u, const Matrix& stopped, const Matrix& duals, double barrier,
                          const LaplacianMatrix& l) {
  detail::check_allo_shapes(u, stopped, duals, l.entries.rows());
  const Vector mu = detail::uniform_measure(u.rows());
  return detail::allo_loss_impl(u, stopped, duals, barrier, Matrix(l.entries / static_cast<double>(u.rows())), mu);
}

inline AlloLoss allo_loss(const AlloState& st, const LaplacianMatrix& l) {
  return allo_loss(st.u, st.u, st.duals, st.barrier, l);
}

/// Euclidean gradient of allo_loss with respect to u; nothing flows through `stopped`.
inline AlloGradient allo_gradient(const Matrix& u, const Matrix& stopped, const Matrix& duals,
                                  double barrier, const LaplacianMatrix& l) {
  detail::check_allo_shapes(u, stopped, duals, l.entries.rows());
  const Vector mu = detail::uniform_measure(u.rows());
  return detail::allo_gradient_impl(u, stopped, duals, barrier,
                                    Matrix(l.entries / static_cast<double>(u.rows())), mu);
}

inline AlloGradient allo_gradient(const AlloState& st, const LaplacianMatrix& l) {
  return allo_gradient(st.u, st.u, st.duals, st.barrier, l);
}

/// Full-batch ALLO on an explicit Laplacian with the uniform measure.
inline std::pair<AlloState, AlloReport> allo_optimize(const LaplacianMatrix& l, int k,
                                                      const AlloHyper& hyper, long max_iters,
                                                      std::uint64_t seed,
                                                      const std::optional<Matrix>& reference = std::nullopt) {
  if (l.entries.rows() != l.entries.cols()) throw DimensionError("Laplacian is not square");
  if (max_iters < 1) throw DomainError("max_iters must be >= 1");
  const int n = static_cast<int>(l.entries.rows());
  detail::check_reference(reference, n);
  AlloState st = detail::initial_state(n, k, hyper, seed);
  const Eigen::SparseMatrix<double> op = detail::to_sparse(l.entries / static_cast<double>(n));
  AlloReport rep = detail::run_full_batch(st, op, detail::uniform_measure(n), hyper, max_iters);
  rep.measure = "uniform";
  if (reference) rep.cosine_alignment = detail::alignment(st.u, *reference);
  return {std::move(st), std::move(rep)};
}

struct StateTransition {
  int state;
  int next;
};

/// Positive-pair Laplacian and negative-state measure estimated from a
/// transition list. Consecutive transitions that chain (next == following
/// state) form one trajectory. Each anchor s_t pairs with s_{t+d} where the
/// offset d >= 1 is geometric with parameter 1 - gamma_allo; the Laplacian
/// weights every reachable offset by its probability instead of drawing one,
/// and `positives` holds one drawn pair per anchor for minibatch mode.
/// The inner-product measure is the dataset state-visitation distribution,
/// which independently drawn negatives (`negatives`, minibatch mode) sample.
struct EmpiricalAllo {
  Matrix laplacian;  // u^T L u = (1/2) E (u(s) - u(s'))^2
  Vector measure;
  std::vector<StateTransition> positives;
  std::vector<int> negatives;
};

inline EmpiricalAllo empirical_allo(const std::vector<StateTransition>& transitions, int n_states,
                                    double gamma_allo, std::uint64_t seed) {
  if (transitions.empty()) throw DomainError("ALLO needs a nonempty transition dataset");
  if (n_states < 1) throw DomainError("n_states must be positive");
  if (!(gamma_allo >= 0.0 && gamma_allo < 1.0)) throw DomainError("gamma_allo must lie in [0, 1)");
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const auto& t = transitions[i];
    if (t.state < 0 || t.state >= n_states || t.next < 0 || t.next >= n_states)
      throw DomainError("transition " + std::to_string(i) + " references a state outside [0, " +
                        std::to_string(n_states) + ")");
  }
  Rng rng(seed);
  std::geometric_distribution<int> offset(1.0 - gamma_allo);  // extra steps beyond the first
  std::uniform_int_distribution<std::size_t> pick(0, transitions.size() - 1);

  const std::size_t m = transitions.size();
  // end of the chained trajectory containing each index
  std::vector<std::size_t> run_end(m);
  run_end[m - 1] = m - 1;
  for (std::size_t i = m - 1; i-- > 0;)
    run_end[i] = transitions[i + 1].state == transitions[i].next ? run_end[i + 1] : i;

  EmpiricalAllo out;
  out.positives.reserve(m);
  out.negatives.reserve(m);
  Matrix weights = Matrix::Zero(n_states, n_states);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t drawn = std::min(run_end[i], i + static_cast<std::size_t>(offset(rng)));
    out.positives.push_back({transitions[i].state, transitions[drawn].next});
    double w = 1.0 - gamma_allo;
    double left = 1.0;
    for (std::size_t j = i; j <= run_end[i] && left > 1e-12; ++j) {
      const double wj = j == run_end[i] ? left : w;  // truncated tail lands on the last state
      weights(transitions[i].state, transitions[j].next) += wj;
      left -= wj;
      w *= gamma_allo;
    }
  }
  out.measure = Vector::Zero(n_states);
  for (const auto& t : transitions) out.measure(t.state) += 1.0;
  out.measure /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) out.negatives.push_back(transitions[pick(rng)].state);
  weights /= weights.sum();
  const Matrix sym = 0.5 * (weights + weights.transpose());
  out.laplacian = -sym;
  out.laplacian.diagonal() += sym.rowwise().sum();
  return out;
}

/// Sample-based ALLO. With batch_size = 0 every stored pair enters every step
/// (the exact limit on the empirical chain); otherwise minibatch SGD with a
/// step that decays as 1/sqrt(t) after the first 20000 updates.
inline std::pair<AlloState, AlloReport> allo_from_samples(
    const std::vector<StateTransition>& transitions, int n_states, int k, const AlloHyper& hyper,
    long max_iters, std::uint64_t seed, const std::optional<Matrix>& reference = std::nullopt) {
  if (max_iters < 1) throw DomainError("max_iters must be >= 1");
  const EmpiricalAllo data = empirical_allo(transitions, n_states, hyper.gamma_allo, seed);
  detail::check_reference(reference, n_states);
  AlloState st = detail::initial_state(n_states, k, hyper, seed ^ 0x9e3779b97f4a7c15ULL);

  AlloReport rep;
  if (hyper.batch_size <= 0) {
    const auto nnz = (data.laplacian.array() != 0.0).count();
    if (4 * nnz > data.laplacian.size())
      rep = detail::run_full_batch(st, data.laplacian, data.measure, hyper, max_iters);
    else
      rep = detail::run_full_batch(st, detail::to_sparse(data.laplacian), data.measure, hyper, max_iters);
  } else {
    const double n = static_cast<double>(n_states);
    const int bsz = hyper.batch_size;
    const int stride = std::max(1, hyper.trace_stride);
    Rng rng(seed + 1);
    std::uniform_int_distribution<std::size_t> pick_pos(0, data.positives.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_neg(0, data.negatives.size() - 1);
    Matrix grad(n_states, k);
    Matrix un(bsz, k);
    for (long it = 0; it < max_iters; ++it) {
      const double decay = std::sqrt(std::min(1.0, 20000.0 / static_cast<double>(it + 1)));
      grad.setZero();
      double smooth = 0.0;
      for (int b = 0; b < bsz; ++b) {
        const auto& p = data.positives[pick_pos(rng)];
        const Eigen::RowVectorXd diff = st.u.row(p.state) - st.u.row(p.next);
        smooth += 0.5 * diff.squaredNorm() / bsz;
        grad.row(p.state) += diff / bsz;
        grad.row(p.next) -= diff / bsz;
      }
      std::vector<int> neg(static_cast<std::size_t>(bsz));
      for (int b = 0; b < bsz; ++b) {
        neg[static_cast<std::size_t>(b)] = data.negatives[pick_neg(rng)];
        un.row(b) = st.u.row(neg[static_cast<std::size_t>(b)]);
      }
      const Matrix g = un.transpose() * un / bsz - Matrix::Identity(k, k);
      Matrix coef = Matrix::Zero(k, k);
      double cons = 0.0;
      for (int j = 0; j < k; ++j)
        for (int c = 0; c <= j; ++c) {
          coef(j, c) = st.duals(j, c) + 2.0 * st.barrier * g(j, c);
          cons += st.duals(j, c) * g(j, c) + st.barrier * g(j, c) * g(j, c);
        }
      const Matrix cgrad = un * coef.transpose() / bsz;
      for (int b = 0; b < bsz; ++b) grad.row(neg[static_cast<std::size_t>(b)]) += cgrad.row(b);

      const double total = smooth + cons;
      if (!std::isfinite(total)) detail::diverged(it);
      if (it % stride == 0) rep.loss_trace.push_back(total);
      st.u -= decay * st.step_primal * n * grad;
      st.duals += decay * st.step_dual * g.triangularView<Eigen::Lower>().toDenseMatrix();
      st.iteration = it + 1;
      if (!st.u.allFinite() || !st.duals.allFinite()) detail::diverged(it);
    }
    rep.iterations = st.iteration;
    rep.orthogonality_error = detail::orthogonality_error(st.u, data.measure);
  }
  rep.measure = "empirical";
  if (reference) rep.cosine_alignment = detail::alignment(st.u, *reference);
  return {std::move(st), std::move(rep)};
}

/// Random-walk transitions (uniform action choice) starting from `start`.
inline std::vector<StateTransition> random_walk(const TabularMdp& mdp, int start, long steps,
                                                std::uint64_t seed) {
  mdp.check_state(start);
  Rng rng(seed);
  std::uniform_int_distribution<int> act(0, mdp.n_actions() - 1);
  std::vector<StateTransition> out;
  out.reserve(static_cast<std::size_t>(std::max(0L, steps)));
  int s = start;
  for (long t = 0; t < steps; ++t) {
    const int next = mdp.sample_next(s, act(rng), rng);
    out.push_back({s, next});
    s = next;
  }
  return out;
}

/// Per-index |cos| between the columns of u and a reference basis.
inline std::vector<double> cosine_alignment(const Matrix& u, const Matrix& reference) {
  if (u.rows() != reference.rows()) throw DimensionError("u and reference differ in rows");
  return detail::alignment(u, reference);
}

}  // namespace lapkey
