#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "absred/errors.hpp"
#include "absred/parallel.hpp"

namespace absred {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

// ============================================================================
// StateSpace: real (A, B, C, D) realization of a proper LTI system
// ============================================================================

class StateSpace {
 public:
  Matrix A, B, C, D;

  StateSpace() : A(0, 0), B(0, 0), C(0, 0), D(0, 0) {}

  StateSpace(Matrix A_, Matrix B_, Matrix C_, Matrix D_)
      : A(std::move(A_)), B(std::move(B_)), C(std::move(C_)), D(std::move(D_)) {
    if (A.rows() != A.cols())
      throw DimensionMismatch("StateSpace: A must be square, got " +
                              std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
    if (B.rows() != A.rows())
      throw DimensionMismatch("StateSpace: B has " + std::to_string(B.rows()) +
                              " rows, expected " + std::to_string(A.rows()));
    if (C.cols() != A.rows())
      throw DimensionMismatch("StateSpace: C has " + std::to_string(C.cols()) +
                              " cols, expected " + std::to_string(A.rows()));
    if (D.rows() != C.rows() || D.cols() != B.cols())
      throw DimensionMismatch("StateSpace: D must be " + std::to_string(C.rows()) + "x" +
                              std::to_string(B.cols()) + ", got " + std::to_string(D.rows()) +
                              "x" + std::to_string(D.cols()));
  }

  /// Static (memoryless) system y = D u.
  static StateSpace gain(const Matrix& D) {
    return StateSpace(Matrix::Zero(0, 0), Matrix::Zero(0, D.cols()), Matrix::Zero(D.rows(), 0),
                      D);
  }

  static StateSpace zero(Eigen::Index p, Eigen::Index m) { return gain(Matrix::Zero(p, m)); }

  static StateSpace identity(Eigen::Index k) { return gain(Matrix::Identity(k, k)); }

  Eigen::Index order() const { return A.rows(); }
  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index p() const { return C.rows(); }
  std::pair<Eigen::Index, Eigen::Index> io() const { return {m(), p()}; }

  /// Selects a sub-map: rows of (C, D) and columns of (B, D); dynamics shared.
  StateSpace select(const std::vector<Eigen::Index>& out_rows,
                    const std::vector<Eigen::Index>& in_cols) const {
    Matrix Bs(n(), static_cast<Eigen::Index>(in_cols.size()));
    Matrix Cs(static_cast<Eigen::Index>(out_rows.size()), n());
    Matrix Ds(static_cast<Eigen::Index>(out_rows.size()),
              static_cast<Eigen::Index>(in_cols.size()));
    for (std::size_t j = 0; j < in_cols.size(); ++j) Bs.col(j) = B.col(in_cols[j]);
    for (std::size_t i = 0; i < out_rows.size(); ++i) Cs.row(i) = C.row(out_rows[i]);
    for (std::size_t i = 0; i < out_rows.size(); ++i)
      for (std::size_t j = 0; j < in_cols.size(); ++j) Ds(i, j) = D(out_rows[i], in_cols[j]);
    return StateSpace(A, Bs, Cs, Ds);
  }

  /// Contiguous block variant of select.
  StateSpace block(Eigen::Index out0, Eigen::Index pcount, Eigen::Index in0,
                   Eigen::Index mcount) const {
    return StateSpace(A, B.middleCols(in0, mcount), C.middleRows(out0, pcount),
                      D.block(out0, in0, pcount, mcount));
  }

  /// Applies the similarity transform x = T xt; requires Tinv = T^{-1}.
  StateSpace transformed(const Matrix& T, const Matrix& Tinv) const {
    return StateSpace(Tinv * A * T, Tinv * B, C * T, D);
  }
};

// ============================================================================
// Eigenvalues and stability
// ============================================================================

inline ComplexVector eigenvalues(const Matrix& A) {
  if (A.rows() == 0) return ComplexVector(0);
  Eigen::EigenSolver<Matrix> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw NumericalFailure("eigenvalue solver failed to converge");
  return es.eigenvalues();
}

inline double max_real_eig(const Matrix& A) {
  if (A.rows() == 0) return -std::numeric_limits<double>::infinity();
  ComplexVector ev = eigenvalues(A);
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ev.size(); ++i) mx = std::max(mx, ev[i].real());
  return mx;
}

/// True iff every eigenvalue of A satisfies Re(lambda) < -margin.
inline bool is_stable(const StateSpace& sys, double margin = 0.0) {
  return max_real_eig(sys.A) < -margin;
}

// ============================================================================
// Frequency-domain evaluation
// ============================================================================

/// Transfer matrix C (sI - A)^{-1} B + D at a complex point s, via dense LU.
inline ComplexMatrix eval_tf(const StateSpace& sys, Complex s) {
  const Eigen::Index n = sys.n();
  if (n == 0) return sys.D.cast<Complex>();
  ComplexMatrix R = -sys.A.cast<Complex>();
  R.diagonal().array() += s;
  Eigen::PartialPivLU<ComplexMatrix> lu(R);
  // Partial-pivot U diagonal gives a cheap singularity signal.
  ComplexVector d = lu.matrixLU().diagonal();
  double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    double a = std::abs(d[i]);
    dmax = std::max(dmax, a);
    dmin = std::min(dmin, a);
  }
  if (!(dmin > dmax * 1e-14 * static_cast<double>(n)) || dmax == 0.0)
    throw SingularResolvent("eval_tf: sI - A numerically singular (evaluation at a pole?)",
                            s.real(), s.imag());
  return sys.C.cast<Complex>() * lu.solve(sys.B.cast<Complex>()) + sys.D.cast<Complex>();
}

// ============================================================================
// FrequencyGrid / FrfData
// ============================================================================

/// Strictly increasing angular frequencies (rad/s), all >= 0.
class FrequencyGrid {
 public:
  explicit FrequencyGrid(std::vector<double> points) : points_(std::move(points)) {
    if (points_.empty()) throw DimensionMismatch("FrequencyGrid: empty grid");
    for (std::size_t k = 0; k < points_.size(); ++k) {
      if (points_[k] < 0.0) throw DimensionMismatch("FrequencyGrid: negative frequency");
      if (k > 0 && !(points_[k] > points_[k - 1]))
        throw DimensionMismatch("FrequencyGrid: not strictly increasing");
    }
  }

  /// count log-equidistant points over [lo, hi] rad/s, lo > 0.
  static FrequencyGrid log_space(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0) || !(hi > lo) || count < 2)
      throw DimensionMismatch("FrequencyGrid::log_space: need 0 < lo < hi and count >= 2");
    std::vector<double> pts(count);
    const double llo = std::log(lo), lhi = std::log(hi);
    for (std::size_t k = 0; k < count; ++k)
      pts[k] = std::exp(llo + (lhi - llo) * static_cast<double>(k) /
                                  static_cast<double>(count - 1));
    pts.front() = lo;
    pts.back() = hi;
    return FrequencyGrid(std::move(pts));
  }

  static FrequencyGrid lin_space(double lo, double hi, std::size_t count) {
    if (!(hi > lo) || lo < 0.0 || count < 2)
      throw DimensionMismatch("FrequencyGrid::lin_space: need 0 <= lo < hi and count >= 2");
    std::vector<double> pts(count);
    for (std::size_t k = 0; k < count; ++k)
      pts[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
    return FrequencyGrid(std::move(pts));
  }

  const std::vector<double>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double operator[](std::size_t k) const { return points_[k]; }

  /// Grid refined with geometric midpoints (used by the "forall omega" surrogates).
  FrequencyGrid with_midpoints() const {
    std::vector<double> pts;
    pts.reserve(2 * points_.size() - 1);
    for (std::size_t k = 0; k < points_.size(); ++k) {
      pts.push_back(points_[k]);
      if (k + 1 < points_.size()) {
        double a = points_[k], b = points_[k + 1];
        pts.push_back(a > 0.0 ? std::sqrt(a * b) : 0.5 * (a + b));
      }
    }
    return FrequencyGrid(std::move(pts));
  }

 private:
  std::vector<double> points_;
};

/// Frequency response samples: one complex p x m matrix per grid point.
struct FrfData {
  FrfData(FrequencyGrid grid_, std::vector<ComplexMatrix> values_)
      : grid(std::move(grid_)), values(std::move(values_)) {
    if (values.size() != grid.size())
      throw DimensionMismatch("FrfData: values/grid length mismatch");
    for (const auto& V : values)
      if (V.rows() != values.front().rows() || V.cols() != values.front().cols())
        throw DimensionMismatch("FrfData: inconsistent matrix shapes");
  }
  FrequencyGrid grid;
  std::vector<ComplexMatrix> values;
};

/// Pointwise eval_tf at s = i*omega for each grid point; parallel across points.
inline FrfData frf(const StateSpace& sys, const FrequencyGrid& grid) {
  std::vector<ComplexMatrix> vals(grid.size());
  std::exception_ptr err;
  std::mutex err_mx;
  parallel_for(grid.size(), [&](std::size_t k) {
    try {
      vals[k] = eval_tf(sys, Complex(0.0, grid[k]));
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mx);
      if (!err) err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);
  return FrfData(grid, std::move(vals));
}

// ============================================================================
// Elementary compositions (shared state-stacking conventions: first listed
// system's states come first)
// ============================================================================

inline Matrix blkdiag(const Matrix& X, const Matrix& Y) {
  Matrix Z = Matrix::Zero(X.rows() + Y.rows(), X.cols() + Y.cols());
  Z.topLeftCorner(X.rows(), X.cols()) = X;
  Z.bottomRightCorner(Y.rows(), Y.cols()) = Y;
  return Z;
}

/// G1 + G2 (same I/O dimensions), states [x1; x2].
inline StateSpace parallel_add(const StateSpace& g1, const StateSpace& g2) {
  if (g1.m() != g2.m() || g1.p() != g2.p())
    throw DimensionMismatch("parallel_add: I/O dimensions differ");
  Matrix A = blkdiag(g1.A, g2.A);
  Matrix B(A.rows(), g1.m());
  B << g1.B, g2.B;
  Matrix C(g1.p(), A.rows());
  C << g1.C, g2.C;
  return StateSpace(A, B, C, g1.D + g2.D);
}

/// G1 - G2 (same I/O dimensions), states [x1; x2].
inline StateSpace parallel_sub(const StateSpace& g1, const StateSpace& g2) {
  if (g1.m() != g2.m() || g1.p() != g2.p())
    throw DimensionMismatch("parallel_sub: I/O dimensions differ");
  Matrix A = blkdiag(g1.A, g2.A);
  Matrix B(A.rows(), g1.m());
  B << g1.B, g2.B;
  Matrix C(g1.p(), A.rows());
  C << g1.C, -g2.C;
  return StateSpace(A, B, C, g1.D - g2.D);
}

/// Series g2 * g1 (u -> g1 -> g2 -> y), states [x1; x2].
inline StateSpace series(const StateSpace& g2, const StateSpace& g1) {
  if (g2.m() != g1.p()) throw DimensionMismatch("series: inner dimensions differ");
  const Eigen::Index n1 = g1.n(), n2 = g2.n();
  Matrix A = Matrix::Zero(n1 + n2, n1 + n2);
  A.topLeftCorner(n1, n1) = g1.A;
  A.bottomRightCorner(n2, n2) = g2.A;
  A.bottomLeftCorner(n2, n1) = g2.B * g1.C;
  Matrix B(n1 + n2, g1.m());
  B << g1.B, g2.B * g1.D;
  Matrix C(g2.p(), n1 + n2);
  C << g2.D * g1.C, g2.C;
  return StateSpace(A, B, C, g2.D * g1.D);
}

/// diag(g1, g2): stacked inputs and outputs, no coupling.
inline StateSpace append(const StateSpace& g1, const StateSpace& g2) {
  Matrix A = blkdiag(g1.A, g2.A);
  Matrix B = blkdiag(g1.B, g2.B);
  Matrix C = blkdiag(g1.C, g2.C);
  Matrix D = blkdiag(g1.D, g2.D);
  return StateSpace(A, B, C, D);
}

/// Constant left/right multipliers: L * G * R.
inline StateSpace scale_io(const StateSpace& g, const Matrix& L, const Matrix& R) {
  if (L.cols() != g.p() || R.rows() != g.m())
    throw DimensionMismatch("scale_io: multiplier dimensions differ");
  return StateSpace(g.A, g.B * R, L * g.C, L * g.D * R);
}

}  // namespace absred
