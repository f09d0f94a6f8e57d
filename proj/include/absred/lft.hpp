#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "absred/errors.hpp"
#include "absred/state_space.hpp"

namespace absred {

// ============================================================================
// PartitionedSystem: 2x2 transfer-block I/O partition
//   [y1; y2] = [P11 P12; P21 P22] [u1; u2]
// For an environment E the convention is u1 = w (external), u2 = y (coupling),
// y1 = z (external), y2 = u (coupling).
// ============================================================================

class PartitionedSystem {
 public:
  StateSpace sys;
  Eigen::Index m1 = 0, m2 = 0, p1 = 0, p2 = 0;

  PartitionedSystem() = default;

  PartitionedSystem(StateSpace sys_, Eigen::Index m1_, Eigen::Index m2_, Eigen::Index p1_,
                    Eigen::Index p2_)
      : sys(std::move(sys_)), m1(m1_), m2(m2_), p1(p1_), p2(p2_) {
    if (m1 < 0 || m2 < 0 || p1 < 0 || p2 < 0 || m1 + m2 != sys.m() || p1 + p2 != sys.p())
      throw DimensionMismatch("PartitionedSystem: splits inconsistent with system I/O");
  }

  Eigen::Index n() const { return sys.n(); }

  /// Block view P_ij (i, j in {1, 2}); shared dynamics, selected B/C/D parts.
  StateSpace block(int i, int j) const {
    if (i < 1 || i > 2 || j < 1 || j > 2)
      throw DimensionMismatch("PartitionedSystem::block: indices must be 1 or 2");
    const Eigen::Index r0 = (i == 1) ? 0 : p1, rc = (i == 1) ? p1 : p2;
    const Eigen::Index c0 = (j == 1) ? 0 : m1, cc = (j == 1) ? m1 : m2;
    return sys.block(r0, rc, c0, cc);
  }

  bool same_partition(const PartitionedSystem& other) const {
    return m1 == other.m1 && m2 == other.m2 && p1 == other.p1 && p2 == other.p2;
  }
};

// ============================================================================
// Generic static interconnection closer.
// Subsystem inputs:  u_tilde = Ry * y_tilde + Rw * w
// External outputs:  z       = Sy * y_tilde + Sw * w
// where y_tilde stacks the subsystem outputs in list order (states likewise).
// ============================================================================

constexpr double wellposed_tol = 1e-9;

namespace detail {

/// Invertibility signal for loop matrices via partial-pivot LU diagonal
/// ratio. Unlike a raw singular-value ratio this does not reject loops that
/// are merely high-gain (stiff-spring feedthroughs give cond ~ stiffness^2
/// while the solve stays perfectly backward-stable).
inline double lu_pivot_ratio(const Matrix& M) {
  if (M.rows() == 0) return 1.0;
  Eigen::PartialPivLU<Matrix> lu(M);
  Vector d = lu.matrixLU().diagonal().cwiseAbs();
  const double dmax = d.maxCoeff();
  if (dmax == 0.0) return 0.0;
  return d.minCoeff() / dmax;
}

}  // namespace detail

inline StateSpace interconnect(const std::vector<StateSpace>& systems, const Matrix& Ry,
                               const Matrix& Rw, const Matrix& Sy, const Matrix& Sw) {
  Eigen::Index ntot = 0, mtot = 0, ptot = 0;
  for (const auto& g : systems) {
    ntot += g.n();
    mtot += g.m();
    ptot += g.p();
  }
  if (Ry.rows() != mtot || Ry.cols() != ptot || Rw.rows() != mtot || Sy.cols() != ptot ||
      Sw.rows() != Sy.rows() || Sw.cols() != Rw.cols())
    throw DimensionMismatch("interconnect: routing matrix dimensions inconsistent");

  Matrix At = Matrix::Zero(ntot, ntot), Bt = Matrix::Zero(ntot, mtot);
  Matrix Ct = Matrix::Zero(ptot, ntot), Dt = Matrix::Zero(ptot, mtot);
  Eigen::Index in = 0, im = 0, ip = 0;
  for (const auto& g : systems) {
    At.block(in, in, g.n(), g.n()) = g.A;
    Bt.block(in, im, g.n(), g.m()) = g.B;
    Ct.block(ip, in, g.p(), g.n()) = g.C;
    Dt.block(ip, im, g.p(), g.m()) = g.D;
    in += g.n();
    im += g.m();
    ip += g.p();
  }

  Matrix Loop = Matrix::Identity(ptot, ptot) - Dt * Ry;
  Eigen::PartialPivLU<Matrix> lu(Loop);
  Matrix Yx = lu.solve(Ct);            // y_tilde = Yx x + Yw w
  Matrix DtRw = Dt * Rw;
  Matrix Yw = lu.solve(DtRw);
  // Well-posedness is decided by the solve itself: a backward-stable solve of
  // an invertible loop leaves a tiny residual regardless of gain scale, while
  // a (near-)singular loop cannot. A raw conditioning threshold would reject
  // stiff-spring feedthroughs whose loop is structurally benign.
  if (ptot > 0) {
    const double lnorm = Loop.norm();
    const bool finite = Yx.allFinite() && Yw.allFinite();
    const bool resid_ok =
        finite &&
        (Loop * Yx - Ct).norm() <= wellposed_tol * (lnorm * Yx.norm() + Ct.norm() + 1.0) &&
        (Loop * Yw - DtRw).norm() <= wellposed_tol * (lnorm * Yw.norm() + DtRw.norm() + 1.0);
    if (!resid_ok)
      throw NotWellPosed("interconnect: feedthrough loop matrix singular",
                         detail::lu_pivot_ratio(Loop));
  }
  Matrix A = At + Bt * Ry * Yx;
  Matrix B = Bt * (Ry * Yw + Rw);
  Matrix C = Sy * Yx;
  Matrix D = Sy * Yw + Sw;
  return StateSpace(std::move(A), std::move(B), std::move(C), std::move(D));
}

// ============================================================================
// Lower / upper LFT realizations: states ordered [x_P; x_M]
// ============================================================================

/// F_l(P, M) = P11 + P12 M (I - P22 M)^{-1} P21.
inline StateSpace lower_lft(const PartitionedSystem& P, const StateSpace& M) {
  if (M.m() != P.p2 || M.p() != P.m2)
    throw DimensionMismatch("lower_lft: M must map P's y2 (" + std::to_string(P.p2) +
                            ") to u2 (" + std::to_string(P.m2) + "), got " +
                            std::to_string(M.m()) + "->" + std::to_string(M.p()));
  const Eigen::Index m1 = P.m1, m2 = P.m2, p1 = P.p1, p2 = P.p2;
  Matrix Ry = Matrix::Zero(m1 + m2 + p2, p1 + p2 + m2);
  Ry.block(m1, p1 + p2, m2, m2).setIdentity();  // u2 <- M output
  Ry.block(m1 + m2, p1, p2, p2).setIdentity();  // M input <- y2
  Matrix Rw = Matrix::Zero(m1 + m2 + p2, m1);
  Rw.topRows(m1).setIdentity();
  Matrix Sy = Matrix::Zero(p1, p1 + p2 + m2);
  Sy.leftCols(p1).setIdentity();
  Matrix Sw = Matrix::Zero(p1, m1);
  return interconnect({P.sys, M}, Ry, Rw, Sy, Sw);
}

/// F_u(P, M) = P22 + P21 M (I - P11 M)^{-1} P12.
inline StateSpace upper_lft(const PartitionedSystem& P, const StateSpace& M) {
  if (M.m() != P.p1 || M.p() != P.m1)
    throw DimensionMismatch("upper_lft: M must map P's y1 (" + std::to_string(P.p1) +
                            ") to u1 (" + std::to_string(P.m1) + "), got " +
                            std::to_string(M.m()) + "->" + std::to_string(M.p()));
  const Eigen::Index m1 = P.m1, m2 = P.m2, p1 = P.p1, p2 = P.p2;
  Matrix Ry = Matrix::Zero(m1 + m2 + p1, p1 + p2 + m1);
  Ry.block(0, p1 + p2, m1, m1).setIdentity();  // u1 <- M output
  Ry.block(m1 + m2, 0, p1, p1).setIdentity();  // M input <- y1
  Matrix Rw = Matrix::Zero(m1 + m2 + p1, m2);
  Rw.middleRows(m1, m2).setIdentity();
  Matrix Sy = Matrix::Zero(p2, p1 + p2 + m1);
  Sy.middleCols(p1, p2).setIdentity();
  Matrix Sw = Matrix::Zero(p2, m2);
  return interconnect({P.sys, M}, Ry, Rw, Sy, Sw);
}

/// Realization of Sigma (I - E22 Sigma)^{-1}; states [x_Sigma; x_E22].
inline StateSpace sigma_loop(const StateSpace& S, const StateSpace& E22) {
  if (E22.m() != S.p() || E22.p() != S.m())
    throw DimensionMismatch("sigma_loop: E22 must map Sigma outputs to Sigma inputs");
  const Eigen::Index m = S.m(), p = S.p();
  Matrix Ry = Matrix::Zero(m + p, p + m);
  Ry.block(0, p, m, m).setIdentity();  // Sigma input <- E22 output
  Ry.block(m, 0, p, p).setIdentity();  // E22 input <- Sigma output
  Matrix Rw = Matrix::Zero(m + p, m);
  Rw.topRows(m).setIdentity();
  Matrix Sy = Matrix::Zero(p, p + m);
  Sy.leftCols(p).setIdentity();
  Matrix Sw = Matrix::Zero(p, m);
  return interconnect({S, E22}, Ry, Rw, Sy, Sw);
}

// ============================================================================
// Well-posedness / internal stability report (Assumption-1 checks)
// ============================================================================

struct WellPosednessReport {
  bool dims_ok = false;
  bool wellposed = false;
  double loop_sigma_ratio = 0.0;  // sigma_min / sigma_max of I - D_E22 D_Sigma
  bool closed_loop_stable = false;
  double closed_loop_max_re = 0.0;
  bool sigma_loop_stable = false;  // Sigma (I - E22 Sigma)^{-1} in RH_inf
  double sigma_loop_max_re = 0.0;

  bool assumption_holds() const { return dims_ok && wellposed && closed_loop_stable && sigma_loop_stable; }
};

inline WellPosednessReport check_interconnection(const PartitionedSystem& E,
                                                 const StateSpace& S, double margin = 0.0) {
  WellPosednessReport rep;
  rep.dims_ok = (E.m2 == S.p() && E.p2 == S.m());
  if (!rep.dims_ok) return rep;

  const Matrix D22 = E.sys.D.block(E.p1, E.m1, E.p2, E.m2);
  Matrix Loop = Matrix::Identity(S.m(), S.m()) - D22 * S.D;
  rep.loop_sigma_ratio = detail::lu_pivot_ratio(Loop);
  StateSpace cl;
  try {
    cl = lower_lft(E, S);
    rep.wellposed = true;
  } catch (const NotWellPosed&) {
    rep.wellposed = false;
    return rep;
  }
  rep.closed_loop_max_re = max_real_eig(cl.A);
  rep.closed_loop_stable = rep.closed_loop_max_re < -margin;

  StateSpace msys = sigma_loop(S, E.block(2, 2));
  rep.sigma_loop_max_re = max_real_eig(msys.A);
  rep.sigma_loop_stable = rep.sigma_loop_max_re < -margin;
  return rep;
}

// ============================================================================
// Augmentation: F_hat = [E11 0 E12; 0 0 Gy; E21 Gu E22]
// ============================================================================

struct AugmentedEnvironment {
  PartitionedSystem fhat;  // split_in (m_C + m, p), split_out (p_C + p, m)
  Matrix Gu, Gy;
  double gu_cond = 0.0, gy_cond = 0.0;
  bool singular_weights = false;
};

namespace detail {

inline double cond_number(const Matrix& M) {
  if (M.rows() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

}  // namespace detail

constexpr double weight_cond_limit = 1e12;

inline AugmentedEnvironment augment(const PartitionedSystem& E_hat, const Matrix& Gu,
                                    const Matrix& Gy, bool allow_singular = false) {
  const Eigen::Index mC = E_hat.m1, p = E_hat.m2, pC = E_hat.p1, m = E_hat.p2;
  if (Gu.rows() != m || Gu.cols() != m)
    throw DimensionMismatch("augment: Gu must be m x m with m = " + std::to_string(m));
  if (Gy.rows() != p || Gy.cols() != p)
    throw DimensionMismatch("augment: Gy must be p x p with p = " + std::to_string(p));

  AugmentedEnvironment out;
  out.Gu = Gu;
  out.Gy = Gy;
  out.gu_cond = detail::cond_number(Gu);
  out.gy_cond = detail::cond_number(Gy);
  out.singular_weights = !(out.gu_cond < weight_cond_limit && out.gy_cond < weight_cond_limit);
  if (out.singular_weights && !allow_singular)
    throw SingularWeight("augment: Gu/Gy not invertible (cond > 1e12); pass allow_singular "
                         "to run without the Lemma-2 machinery");

  const StateSpace& e = E_hat.sys;
  const Eigen::Index n = e.n();
  Matrix B(n, mC + m + p);
  B << e.B.leftCols(mC), Matrix::Zero(n, m), e.B.rightCols(p);
  Matrix C(pC + p + m, n);
  C << e.C.topRows(pC), Matrix::Zero(p, n), e.C.bottomRows(m);
  Matrix D = Matrix::Zero(pC + p + m, mC + m + p);
  D.block(0, 0, pC, mC) = e.D.block(0, 0, pC, mC);          // Dzw
  D.block(0, mC + m, pC, p) = e.D.block(0, mC, pC, p);      // Dzy
  D.block(pC, mC, p, m).setZero();
  D.block(pC, mC + m, p, p) = Gy;
  D.block(pC + p, 0, m, mC) = e.D.block(pC, 0, m, mC);      // Duw
  D.block(pC + p, mC, m, m) = Gu;
  D.block(pC + p, mC + m, m, p) = e.D.block(pC, mC, m, p);  // Duy
  out.fhat =
      PartitionedSystem(StateSpace(e.A, std::move(B), std::move(C), std::move(D)), mC + m, p,
                        pC + p, m);
  return out;
}

// ============================================================================
// Error systems of the abstracted-reduction analysis
// ============================================================================

/// Xi_E = E_hat - E (parallel difference over all partition channels).
inline StateSpace abstraction_error(const PartitionedSystem& E, const PartitionedSystem& E_hat) {
  if (!E.same_partition(E_hat))
    throw DimensionMismatch("abstraction_error: partitions do not match");
  return parallel_sub(E_hat.sys, E.sys);
}

/// Xi_E22 = E_hat22 - E22 (coupling-channel subblock).
inline StateSpace abstraction_error_22(const PartitionedSystem& E,
                                       const PartitionedSystem& E_hat) {
  if (!E.same_partition(E_hat))
    throw DimensionMismatch("abstraction_error_22: partitions do not match");
  return parallel_sub(E_hat.block(2, 2), E.block(2, 2));
}

/// [0 I; I E22hat] as a partitioned system over E22hat's states:
/// F_l of it with Sigma is Sigma (I - E22hat Sigma)^{-1}.
inline PartitionedSystem identity_augmented_block(const StateSpace& E22_hat) {
  const Eigen::Index m = E22_hat.p(), p = E22_hat.m();
  const Eigen::Index n = E22_hat.n();
  Matrix B(n, m + p);
  B << Matrix::Zero(n, m), E22_hat.B;
  Matrix C(p + m, n);
  C << Matrix::Zero(p, n), E22_hat.C;
  Matrix D = Matrix::Zero(p + m, m + p);
  D.block(0, m, p, p).setIdentity();
  D.block(p, 0, m, m).setIdentity();
  D.block(p, m, m, p) = E22_hat.D;
  return PartitionedSystem(StateSpace(E22_hat.A, std::move(B), std::move(C), std::move(D)), m,
                           p, p, m);
}

struct ReductionError22 {
  StateSpace xi_f22;      // Gy Xi_tilde Gu (augmented-channel error)
  StateSpace xi_f_tilde;  // Sigma_r (I - E22hat Sigma_r)^{-1} - Sigma (I - E22hat Sigma)^{-1}
};

/// Augmented-channel reduction error. With constant invertible weights,
/// Xi_tilde = Gy^{-1} Xi_F22 Gu^{-1} is weight-independent and is built from
/// the identity-augmented loops directly.
inline ReductionError22 reduction_error_22(const StateSpace& E22_hat, const Matrix& Gu,
                                           const Matrix& Gy, const StateSpace& S,
                                           const StateSpace& Sr, bool allow_singular = false) {
  if (Sr.m() != S.m() || Sr.p() != S.p())
    throw DimensionMismatch("reduction_error_22: Sigma_r I/O must match Sigma");
  if (Gu.rows() != S.m() || Gu.cols() != S.m() || Gy.rows() != S.p() || Gy.cols() != S.p())
    throw DimensionMismatch("reduction_error_22: weight dimensions");
  if (!allow_singular && (!(detail::cond_number(Gu) < weight_cond_limit) ||
                          !(detail::cond_number(Gy) < weight_cond_limit)))
    throw SingularWeight("reduction_error_22: Gu/Gy not invertible (cond > 1e12)");
  PartitionedSystem P = identity_augmented_block(E22_hat);
  ReductionError22 out;
  out.xi_f_tilde = parallel_sub(lower_lft(P, Sr), lower_lft(P, S));
  out.xi_f22 = scale_io(out.xi_f_tilde, Gy, Gu);
  return out;
}

/// Lemma-2 inversion: recovers Sigma_r from (E22hat, weights, Sigma, Xi_F22).
inline StateSpace reconstruct_sigma_r(const StateSpace& E22_hat, const Matrix& Gu,
                                      const Matrix& Gy, const StateSpace& S,
                                      const StateSpace& Xi_F22) {
  const Eigen::Index m = S.m(), p = S.p();
  if (Xi_F22.m() != m || Xi_F22.p() != p)
    throw DimensionMismatch("reconstruct_sigma_r: Xi_F22 must be p x m");
  if (!(detail::cond_number(Gu) < weight_cond_limit) ||
      !(detail::cond_number(Gy) < weight_cond_limit))
    throw SingularWeight("reconstruct_sigma_r: Gu/Gy must be invertible");
  Matrix Gu_inv = Gu.inverse();
  Matrix Gy_inv = Gy.inverse();

  StateSpace Mhat = sigma_loop(S, E22_hat);
  StateSpace G = parallel_add(Mhat, scale_io(Xi_F22, Gy_inv, Gu_inv));

  // P = [-E22hat I; I 0] over E22hat's states; split_in (p, m), split_out (m, p).
  const Eigen::Index n = E22_hat.n();
  Matrix B(n, p + m);
  B << E22_hat.B, Matrix::Zero(n, m);
  Matrix C(m + p, n);
  C << -E22_hat.C, Matrix::Zero(p, n);
  Matrix D = Matrix::Zero(m + p, p + m);
  D.block(0, 0, m, p) = -E22_hat.D;
  D.block(0, p, m, m).setIdentity();
  D.block(m, 0, p, p).setIdentity();
  PartitionedSystem P(StateSpace(E22_hat.A, std::move(B), std::move(C), std::move(D)), p, m, m,
                      p);
  return upper_lft(P, G);
}

/// E_C = F_l(E, Sigma_r) - F_l(E, Sigma).
inline StateSpace coupled_error(const PartitionedSystem& E, const StateSpace& S,
                                const StateSpace& Sr) {
  if (Sr.m() != S.m() || Sr.p() != S.p())
    throw DimensionMismatch("coupled_error: Sigma_r I/O must match Sigma");
  return parallel_sub(lower_lft(E, Sr), lower_lft(E, S));
}

// ============================================================================
// Nominal model N mapping the error sources to the coupled error:
//   E_C = F_u(N, diag(Xi_E22, Xi_F_tilde, Xi_E22))
// Inputs (m, p, m, m_C), outputs (p, m, p, p_C). Relative to the published
// block matrix the first input-column blocks are negated ([-M; -I; -M; -E12 M]),
// which is what makes the identity above hold with the repeated +Xi_E22 block;
// the D-scale set is invariant under this convention.
// ============================================================================

struct BlockDims {
  Eigen::Index m = 0, p = 0, mC = 0, pC = 0;
  Eigen::Index delta_in() const { return m + p + m; }     // N input cols facing Delta
  Eigen::Index delta_out() const { return p + m + p; }    // N output rows facing Delta
  Eigen::Index n_in() const { return delta_in() + mC; }
  Eigen::Index n_out() const { return delta_out() + pC; }
};

class NominalN {
 public:
  StateSpace N;
  BlockDims dims;
  // Kept for fast pointwise evaluation on dense grids.
  StateSpace sigma;
  PartitionedSystem env;

  PartitionedSystem as_partitioned() const {
    return PartitionedSystem(N, dims.delta_in(), dims.mC, dims.delta_out(), dims.pC);
  }

  /// N(i omega) from the block formulas in M(i omega) and E(i omega).
  ComplexMatrix eval_at(double omega) const {
    const Complex s(0.0, omega);
    const Eigen::Index m = dims.m, p = dims.p, mC = dims.mC, pC = dims.pC;
    ComplexMatrix Es = eval_tf(env.sys, s);
    ComplexMatrix E12 = Es.block(0, mC, pC, p);
    ComplexMatrix E21 = Es.block(pC, 0, m, mC);
    ComplexMatrix E22 = Es.block(pC, mC, m, p);
    ComplexMatrix Ss = eval_tf(sigma, s);
    ComplexMatrix L = ComplexMatrix::Identity(m, m) - E22 * Ss;
    Eigen::PartialPivLU<ComplexMatrix> lu(L);
    ComplexMatrix M = Ss * lu.inverse();
    ComplexMatrix ME21 = M * E21;
    ComplexMatrix E12M = E12 * M;

    ComplexMatrix Nmat = ComplexMatrix::Zero(dims.n_out(), dims.n_in());
    const Eigen::Index r0 = 0, r1 = p, r2 = p + m, r3 = p + m + p;
    const Eigen::Index c0 = 0, c1 = m, c2 = m + p, c3 = m + p + m;
    Nmat.block(r0, c0, p, m) = -M;
    Nmat.block(r0, c1, p, p) = ComplexMatrix::Identity(p, p);
    Nmat.block(r0, c2, p, m) = M;
    Nmat.block(r0, c3, p, mC) = ME21;
    Nmat.block(r1, c0, m, m) = -ComplexMatrix::Identity(m, m);
    Nmat.block(r1, c3, m, mC) = E21;
    Nmat.block(r2, c0, p, m) = -M;
    Nmat.block(r2, c2, p, m) = M;
    Nmat.block(r2, c3, p, mC) = ME21;
    Nmat.block(r3, c0, pC, m) = -E12M;
    Nmat.block(r3, c1, pC, p) = E12;
    Nmat.block(r3, c2, pC, m) = E12M;
    return Nmat;
  }
};

inline NominalN build_nominal_N(const PartitionedSystem& E, const StateSpace& S,
                                double margin = 0.0) {
  WellPosednessReport rep = check_interconnection(E, S, margin);
  if (!rep.dims_ok)
    throw DimensionMismatch("build_nominal_N: E/Sigma dimensions inconsistent");
  if (!rep.wellposed)
    throw NotWellPosed("build_nominal_N: F_l(E, Sigma) not well-posed", rep.loop_sigma_ratio);
  if (!rep.closed_loop_stable || !rep.sigma_loop_stable)
    throw UnstableNominal("build_nominal_N: Assumption 1 fails (interconnection unstable)");

  BlockDims d;
  d.m = S.m();
  d.p = S.p();
  d.mC = E.m1;
  d.pC = E.p1;

  StateSpace E22 = E.block(2, 2);
  StateSpace E21 = E.block(2, 1);
  StateSpace E12 = E.block(1, 2);

  // Subsystems: two copies of the Sigma/E22 loop (one fed by E21 w, one not),
  // plus E21 and E12 views. See header comment for the sign convention.
  const std::vector<StateSpace> subs{S, E22, S, E22, E21, E12};
  const Eigen::Index m = d.m, p = d.p, mC = d.mC, pC = d.pC;
  const Eigen::Index mtot = m + p + m + p + mC + p;   // subsystem inputs
  const Eigen::Index ptot = p + m + p + m + m + pC;   // subsystem outputs
  // Output offsets: Sa:0(p), E22a:p(m), Sb:p+m(p), E22b:2p+m(m), E21:2p+2m(m), E12:2p+3m(pC)
  const Eigen::Index ySa = 0, yE22a = p, ySb = p + m, yE22b = 2 * p + m, yE21 = 2 * p + 2 * m,
                     yE12 = 2 * p + 3 * m;
  // Input offsets: Sa:0(m), E22a:m(p), Sb:m+p(m), E22b:2m+p(p), E21:2m+2p(mC), E12:2m+2p+mC(p)
  const Eigen::Index uSa = 0, uE22a = m, uSb = m + p, uE22b = 2 * m + p, uE21 = 2 * m + 2 * p,
                     uE12 = 2 * m + 2 * p + mC;
  // External inputs: eta1:0(m), eta2:m(p), eta3:m+p(m), w:2m+p(mC)
  const Eigen::Index e1 = 0, e2 = m, e3 = m + p, ew = 2 * m + p;

  Matrix Ry = Matrix::Zero(mtot, ptot);
  Matrix Rw = Matrix::Zero(mtot, d.n_in());
  // Sa.in = -eta1 + eta3 + E21.out + E22a.out
  Rw.block(uSa, e1, m, m) = -Matrix::Identity(m, m);
  Rw.block(uSa, e3, m, m).setIdentity();
  Ry.block(uSa, yE21, m, m).setIdentity();
  Ry.block(uSa, yE22a, m, m).setIdentity();
  // E22a.in = Sa.out
  Ry.block(uE22a, ySa, p, p).setIdentity();
  // Sb.in = -eta1 + eta3 + E22b.out
  Rw.block(uSb, e1, m, m) = -Matrix::Identity(m, m);
  Rw.block(uSb, e3, m, m).setIdentity();
  Ry.block(uSb, yE22b, m, m).setIdentity();
  // E22b.in = Sb.out
  Ry.block(uE22b, ySb, p, p).setIdentity();
  // E21.in = w
  Rw.block(uE21, ew, mC, mC).setIdentity();
  // E12.in = Sb.out + eta2
  Ry.block(uE12, ySb, p, p).setIdentity();
  Rw.block(uE12, e2, p, p).setIdentity();

  Matrix Sy = Matrix::Zero(d.n_out(), ptot);
  Matrix Sw = Matrix::Zero(d.n_out(), d.n_in());
  // xi1 = Sa.out + eta2 ; xi2 = -eta1 + E21.out ; xi3 = Sa.out ; xi4 = E12.out
  Sy.block(0, ySa, p, p).setIdentity();
  Sw.block(0, e2, p, p).setIdentity();
  Sy.block(p, yE21, m, m).setIdentity();
  Sw.block(p, e1, m, m) = -Matrix::Identity(m, m);
  Sy.block(p + m, ySa, p, p).setIdentity();
  Sy.block(p + m + p, yE12, pC, pC).setIdentity();

  NominalN out;
  out.N = interconnect(subs, Ry, Rw, Sy, Sw);
  out.dims = d;
  out.sigma = S;
  out.env = E;
  if (!(max_real_eig(out.N.A) < -margin))
    throw UnstableNominal("build_nominal_N: assembled N is unstable");
  return out;
}

/// E_C(i omega) = F_u(N(i omega), diag(XiE, XiF, XiE)) as complex matrices.
inline ComplexMatrix apply_perturbation(const ComplexMatrix& Nmat, const BlockDims& d,
                                        const ComplexMatrix& XiE, const ComplexMatrix& XiF) {
  if (XiE.rows() != d.m || XiE.cols() != d.p || XiF.rows() != d.p || XiF.cols() != d.m)
    throw DimensionMismatch("apply_perturbation: XiE must be m x p, XiF p x m");
  const Eigen::Index din = d.delta_in(), dout = d.delta_out();
  ComplexMatrix Delta = ComplexMatrix::Zero(din, dout);
  Delta.block(0, 0, d.m, d.p) = XiE;
  Delta.block(d.m, d.p, d.p, d.m) = XiF;
  Delta.block(d.m + d.p, d.p + d.m, d.m, d.p) = XiE;
  ComplexMatrix N11 = Nmat.topLeftCorner(dout, din);
  ComplexMatrix N12 = Nmat.topRightCorner(dout, d.mC);
  ComplexMatrix N21 = Nmat.bottomLeftCorner(d.pC, din);
  ComplexMatrix N22 = Nmat.bottomRightCorner(d.pC, d.mC);
  ComplexMatrix L = ComplexMatrix::Identity(dout, dout) - N11 * Delta;
  return N21 * Delta * L.partialPivLu().solve(N12) + N22;
}

}  // namespace absred
