#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <utility>
#include <vector>

#include "absred/errors.hpp"
#include "absred/state_space.hpp"

namespace absred {

// ============================================================================
// Lyapunov solver (Bartels-Stewart family via complex Schur form)
// ============================================================================

/// Solves A X + X A^T + Qrhs = 0 for Hurwitz A and symmetric Qrhs.
inline Matrix solve_lyapunov(const Matrix& A, const Matrix& Qrhs) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || Qrhs.rows() != n || Qrhs.cols() != n)
    throw DimensionMismatch("solve_lyapunov: dimension mismatch");
  if (n == 0) return Matrix(0, 0);

  Eigen::ComplexSchur<ComplexMatrix> schur(A.cast<Complex>(), /*computeU=*/true);
  if (schur.info() != Eigen::Success)
    throw NumericalFailure("solve_lyapunov: Schur decomposition failed");
  const ComplexMatrix& T = schur.matrixT();
  const ComplexMatrix& U = schur.matrixU();

  double max_re = T(0, 0).real();
  for (Eigen::Index i = 1; i < n; ++i) max_re = std::max(max_re, T(i, i).real());
  if (!(max_re < 0.0))
    throw NotHurwitz("solve_lyapunov: A has an eigenvalue with nonnegative real part", max_re);

  // Transformed equation T Y + Y T^H + F = 0 with F = U^H Qrhs U; T upper
  // triangular, solved column by column from the last.
  ComplexMatrix F = U.adjoint() * Qrhs.cast<Complex>() * U;
  ComplexMatrix Y = ComplexMatrix::Zero(n, n);
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    ComplexVector rhs = -F.col(k);
    for (Eigen::Index j = k + 1; j < n; ++j) rhs -= std::conj(T(k, j)) * Y.col(j);
    ComplexMatrix L = T;
    L.diagonal().array() += std::conj(T(k, k));
    Y.col(k) = L.triangularView<Eigen::Upper>().solve(rhs);
  }
  Matrix X = (U * Y * U.adjoint()).real();
  return 0.5 * (X + X.transpose());
}

// ============================================================================
// Gramians
// ============================================================================

struct GramianPair {
  Matrix P;  // controllability
  Matrix Q;  // observability
};

inline GramianPair gramians(const StateSpace& sys) {
  GramianPair g;
  g.P = solve_lyapunov(sys.A, sys.B * sys.B.transpose());
  g.Q = solve_lyapunov(sys.A.transpose(), sys.C.transpose() * sys.C);
  return g;
}

// ============================================================================
// Balancing (truncated square-root scheme) and the two truncation styles
// ============================================================================

struct BalancingResult {
  StateSpace balanced;
  Matrix T;     // x = T x_bal
  Matrix Tinv;  // x_bal = Tinv x
  std::vector<double> hsv;  // nonincreasing Hankel singular values
};

enum class ReduceStyle { truncate, residualize };

inline const char* to_string(ReduceStyle s) {
  return s == ReduceStyle::truncate ? "truncate" : "residualize";
}

namespace detail {

/// Full-size square-root factor of a symmetric PSD matrix: M ~= L L^T.
/// Eigenvalues below floor_rel * max are treated as zero.
inline Matrix psd_sqrt_factor(const Matrix& M, double floor_rel = 1e-14) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()));
  if (es.info() != Eigen::Success)
    throw NumericalFailure("psd_sqrt_factor: eigen decomposition failed");
  Vector lam = es.eigenvalues();
  const double lmax = std::max(0.0, lam.maxCoeff());
  Vector s = lam;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    s[i] = lam[i] > lmax * floor_rel ? std::sqrt(lam[i]) : 0.0;
  return es.eigenvectors() * s.asDiagonal();
}

}  // namespace detail

/// hsv floor policy: values below hsv_floor_rel * hsv[0] are treated as zero
/// (non-minimal directions of FE-style models).
constexpr double hsv_floor_rel = 1e-12;

/// Balances sys against the given Gramian pair (P, Q). Used directly by the
/// closed-loop methods where (P, Q) are sub-Gramians of an interconnection;
/// floor_rel controls which trailing directions are treated as numerically
/// zero and completed orthogonally instead of inverse-scaled.
inline BalancingResult balance_with_gramians(const StateSpace& sys, const Matrix& P,
                                             const Matrix& Q,
                                             double floor_rel = hsv_floor_rel) {
  const Eigen::Index n = sys.n();
  if (P.rows() != n || Q.rows() != n)
    throw DimensionMismatch("balance_with_gramians: Gramian size mismatch");
  BalancingResult res;
  if (n == 0) {
    res.balanced = sys;
    res.T = Matrix(0, 0);
    res.Tinv = Matrix(0, 0);
    return res;
  }

  Matrix Lp = detail::psd_sqrt_factor(P);
  Matrix Lq = detail::psd_sqrt_factor(Q);
  Eigen::JacobiSVD<Matrix> svd(Lq.transpose() * Lp, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector sv = svd.singularValues();

  res.hsv.assign(sv.data(), sv.data() + sv.size());
  if (!(sv[0] > 0.0))
    throw NearSingularGramian("balance: all Hankel singular values vanish");

  const double floor = sv[0] * floor_rel;
  Eigen::Index k = 0;
  while (k < n && sv[k] > floor) ++k;

  Matrix T(n, n), Tinv(n, n);
  Matrix sqinv = sv.head(k).cwiseSqrt().cwiseInverse().asDiagonal();
  T.leftCols(k) = Lp * svd.matrixV().leftCols(k) * sqinv;
  Tinv.topRows(k) = sqinv * svd.matrixU().leftCols(k).transpose() * Lq.transpose();
  if (k < n) {
    // Near-unreachable/unobservable directions: complete the basis so T stays
    // invertible; the trailing states carry hsv below the floor.
    Eigen::HouseholderQR<Matrix> qr(T.leftCols(k));
    Matrix Qfull = qr.householderQ();
    T.rightCols(n - k) = Qfull.rightCols(n - k);
    Eigen::FullPivLU<Matrix> lu(T);
    if (!lu.isInvertible())
      throw NearSingularGramian("balance: could not complete a nonsingular transform");
    Tinv = lu.inverse();
  }

  res.T = T;
  res.Tinv = Tinv;
  res.balanced = sys.transformed(T, Tinv);
  return res;
}

/// Open-loop balancing: Gramians from sys's own Lyapunov equations.
inline BalancingResult balance(const StateSpace& sys) {
  GramianPair g = gramians(sys);
  return balance_with_gramians(sys, g.P, g.Q);
}

namespace detail {

inline void check_split(const BalancingResult& bal, Eigen::Index r, bool allow_tie_split) {
  const Eigen::Index n = bal.balanced.n();
  if (r <= 0 || r > n)
    throw BadOrder("reduction order r must satisfy 0 < r <= n, got r = " + std::to_string(r) +
                   ", n = " + std::to_string(n));
  if (r < n && !allow_tie_split) {
    const double tie_tol = 1e-12 * bal.hsv[0];
    if (bal.hsv[r - 1] - bal.hsv[r] <= tie_tol)
      throw TieAtSplit("Hankel singular values tie at the split (hsv[" + std::to_string(r - 1) +
                       "] ~= hsv[" + std::to_string(r) +
                       "]); pass allow_tie_split to proceed in stored order");
  }
}

}  // namespace detail

/// Keeps the first r balanced states.
inline StateSpace truncate(const BalancingResult& bal, Eigen::Index r,
                           bool allow_tie_split = false) {
  detail::check_split(bal, r, allow_tie_split);
  const StateSpace& b = bal.balanced;
  if (r == b.n()) return b;
  return StateSpace(b.A.topLeftCorner(r, r), b.B.topRows(r), b.C.leftCols(r), b.D);
}

/// Singular perturbation approximation: retains the steady-state (DC) transfer.
inline StateSpace residualize(const BalancingResult& bal, Eigen::Index r,
                              bool allow_tie_split = false) {
  detail::check_split(bal, r, allow_tie_split);
  const StateSpace& b = bal.balanced;
  const Eigen::Index n = b.n(), q = n - r;
  if (q == 0) return b;
  Matrix A11 = b.A.topLeftCorner(r, r), A12 = b.A.topRightCorner(r, q);
  Matrix A21 = b.A.bottomLeftCorner(q, r), A22 = b.A.bottomRightCorner(q, q);
  Matrix B1 = b.B.topRows(r), B2 = b.B.bottomRows(q);
  Matrix C1 = b.C.leftCols(r), C2 = b.C.rightCols(q);
  Eigen::FullPivLU<Matrix> lu(A22);
  if (!lu.isInvertible())
    throw SingularA22("residualize: discarded A22 block is singular");
  Matrix A22iA21 = lu.solve(A21);
  Matrix A22iB2 = lu.solve(B2);
  return StateSpace(A11 - A12 * A22iA21, B1 - A12 * A22iB2, C1 - C2 * A22iA21,
                    b.D - C2 * A22iB2);
}

inline StateSpace reduce(const BalancingResult& bal, Eigen::Index r, ReduceStyle style,
                         bool allow_tie_split = false) {
  return style == ReduceStyle::truncate ? truncate(bal, r, allow_tie_split)
                                        : residualize(bal, r, allow_tie_split);
}

/// Classical a priori bound 2 * sum of discarded hsv.
inline double truncation_bound(const std::vector<double>& hsv, Eigen::Index r) {
  double s = 0.0;
  for (std::size_t k = static_cast<std::size_t>(r); k < hsv.size(); ++k) s += hsv[k];
  return 2.0 * s;
}

}  // namespace absred
