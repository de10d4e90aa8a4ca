#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "lapkey/error.hpp"
#include "lapkey/mdp.hpp"

namespace lapkey {

inline constexpr double kJacobiTol = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kEigenResidualTol = 1e-8;
inline constexpr double kDegenerateGap = 1e-9;

/// Ascending eigenpairs of a graph Laplacian; columns of `eigenvectors` are orthonormal.
struct SpectralBasis {
  Vector eigenvalues;
  Matrix eigenvectors;  // n_states x width
  int n_states = 0;

  int width() const { return static_cast<int>(eigenvectors.cols()); }
  bool complete() const { return width() == n_states; }
};

struct FourierCoefficients {
  Vector coeffs;
};

struct GraphNormReport {
  double norm = 0.0;
  double variation_constant = 0.0;  // ||f||_G^2 / ||f||^2, 0 for f = 0
  double xi = std::numeric_limits<double>::quiet_NaN();  // ||f||_G / sqrt(lambda_k)
};

struct EigenResult {
  Vector values;
  Matrix vectors;
  int sweeps = 0;
};

/// Cyclic Jacobi rotations on a dense symmetric matrix. Stops when the
/// off-diagonal Frobenius norm drops below tol * ||A||_F.
inline EigenResult jacobi_eigen(const Matrix& input, double tol = kJacobiTol,
                                int max_sweeps = kJacobiMaxSweeps) {
  if (input.rows() != input.cols()) throw DimensionError("matrix is not square");
  const Eigen::Index n = input.rows();
  Matrix a = input;
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());

  auto off_norm = [&] {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) acc += a(i, j) * a(i, j);
    return std::sqrt(acc);
  };

  EigenResult out;
  double off = off_norm();
  while (off > tol * scale) {
    if (out.sweeps >= max_sweeps) {
      std::ostringstream os;
      os << "Jacobi eigensolver did not converge in " << max_sweeps
         << " sweeps; off-diagonal residual " << off;
      throw NumericalError(os.str());
    }
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- A J
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        // A <- J^T A
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    ++out.sweeps;
    off = off_norm();
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

/// Flip each column so its largest-magnitude entry is positive. Entries within a
/// relative 1e-9 of the maximum count as ties; the lowest state index wins.
inline void apply_sign_convention(Matrix& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    const double m = vectors.col(j).cwiseAbs().maxCoeff();
    if (m == 0.0) continue;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      if (std::abs(vectors(i, j)) >= m * (1.0 - 1e-9)) {
        if (vectors(i, j) < 0.0) vectors.col(j) *= -1.0;
        break;
      }
    }
  }
}

/// Eigendecomposition of L keeping the first k pairs (all when k is empty).
inline SpectralBasis eigendecompose(const LaplacianMatrix& l, std::optional<int> k = std::nullopt) {
  const int n = l.n_states();
  if (l.entries.cols() != n) throw DimensionError("Laplacian is not square");
  const double asym = (l.entries - l.entries.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTol) {
    std::ostringstream os;
    os << "Laplacian is not symmetric (max asymmetry " << asym << ")";
    throw ReversibilityError(os.str());
  }
  const int width = k.value_or(n);
  if (width < 1 || width > n)
    throw DomainError("k = " + std::to_string(width) + " outside [1, " + std::to_string(n) + "]");

  auto eig = jacobi_eigen(l.entries);
  SpectralBasis basis;
  basis.n_states = n;
  basis.eigenvalues = eig.values.head(width);
  basis.eigenvectors = eig.vectors.leftCols(width);
  apply_sign_convention(basis.eigenvectors);

  for (int i = 0; i < width; ++i) {
    const double res =
        (l.entries * basis.eigenvectors.col(i) - basis.eigenvalues(i) * basis.eigenvectors.col(i))
            .cwiseAbs()
            .maxCoeff();
    if (res > kEigenResidualTol) {
      std::ostringstream os;
      os << "eigenpair " << i + 1 << " residual " << res << " exceeds " << kEigenResidualTol;
      throw NumericalError(os.str());
    }
  }
  return basis;
}

/// True when the cut after the k-th eigenvector sits at a spectral gap, i.e. the
/// retained subspace does not depend on the eigensolver's choice of basis.
inline bool is_canonical_cut(const SpectralBasis& basis, int k) {
  if (k >= basis.width()) return true;
  return basis.eigenvalues(k) - basis.eigenvalues(k - 1) >= kDegenerateGap;
}

inline void check_signal(const SpectralBasis& basis, const Vector& f) {
  if (f.size() != basis.n_states)
    throw DimensionError("signal has length " + std::to_string(f.size()) + ", expected " +
                         std::to_string(basis.n_states));
}

inline FourierCoefficients gft(const SpectralBasis& basis, const Vector& f) {
  check_signal(basis, f);
  return {basis.eigenvectors.transpose() * f};
}

inline Vector inverse_gft(const SpectralBasis& basis, const FourierCoefficients& c) {
  if (c.coeffs.size() > basis.width()) throw DimensionError("more coefficients than basis columns");
  return basis.eigenvectors.leftCols(c.coeffs.size()) * c.coeffs;
}

/// f_k = sum_{i <= k} <f, e_i> e_i.
inline Vector reconstruct_truncated(const SpectralBasis& basis, const Vector& f, int k) {
  check_signal(basis, f);
  if (k < 1 || k > basis.width())
    throw DomainError("k = " + std::to_string(k) + " outside [1, " + std::to_string(basis.width()) +
                      "]");
  const auto phi = basis.eigenvectors.leftCols(k);
  if (!is_canonical_cut(basis, k))
    warn("non-canonical cut at k = " + std::to_string(k) + " (degenerate eigenvalues)");
  return phi * (phi.transpose() * f);
}

/// Squared reconstruction error sum_{i > k} fhat_i^2 from a complete basis.
inline double truncation_energy(const SpectralBasis& basis, const Vector& f, int k) {
  const auto c = gft(basis, f).coeffs;
  if (k >= c.size()) return 0.0;
  return c.tail(c.size() - k).squaredNorm();
}

/// ||f||_G = sqrt(1/2 sum_ij P(i,j) (f(i) - f(j))^2).
inline GraphNormReport graph_norm(const TransitionMatrix& p, const Vector& f,
                                  std::optional<double> lambda_k = std::nullopt) {
  const auto n = p.rows.rows();
  if (f.size() != n)
    throw DimensionError("signal has length " + std::to_string(f.size()) + ", expected " +
                         std::to_string(n));
  double acc = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = f(i) - f(j);
      acc += p.rows(i, j) * d * d;
    }
  GraphNormReport rep;
  const double sq = 0.5 * acc;
  rep.norm = std::sqrt(sq);
  const double energy = f.squaredNorm();
  rep.variation_constant = energy > 0.0 ? sq / energy : 0.0;
  if (lambda_k) {
    rep.xi = *lambda_k > 0.0 ? rep.norm / std::sqrt(*lambda_k)
                             : std::numeric_limits<double>::infinity();
  }
  return rep;
}

/// Quadratic form f^T L f (equals ||f||_G^2 for symmetric chains).
inline double quadratic_form(const LaplacianMatrix& l, const Vector& f) {
  if (f.size() != l.n_states()) throw DimensionError("signal length does not match Laplacian");
  return f.dot(l.entries * f);
}

/// |sum_s f(s)^2 - sum_i fhat_i^2|.
inline double parseval_check(const SpectralBasis& basis, const Vector& f) {
  if (!basis.complete())
    throw DomainError("Parseval check needs a complete basis (width " +
                      std::to_string(basis.width()) + " < " + std::to_string(basis.n_states) + ")");
  return std::abs(f.squaredNorm() - gft(basis, f).coeffs.squaredNorm());
}

/// ||f||_G^2 / lambda_k: upper bound on the squared truncation error.
inline double reconstruction_bound(const GraphNormReport& norm, double lambda_k) {
  if (!(lambda_k > 0.0)) {
    std::ostringstream os;
    os << "reconstruction bound needs lambda_k > 0, got " << lambda_k;
    throw DomainError(os.str());
  }
  return norm.norm * norm.norm / lambda_k;
}

}  // namespace lapkey
