#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "absred/errors.hpp"
#include "absred/lft.hpp"
#include "absred/norms.hpp"
#include "absred/parallel.hpp"
#include "absred/ss_io.hpp"
#include "absred/state_space.hpp"

namespace absred {

// ============================================================================
// D-scales for the repeated-block uncertainty diag(XiE22, XiF~, XiE22, perf):
// a Hermitian PD 2x2 S couples the two XiE22 slots, a positive scalar dF
// scales the XiF~ slot, identity on the performance channel.
//   D_l blocks (p, m, p, pC): [S11 Ip, S12 Ip; S21 Ip, S22 Ip] pattern, dF Im, I_pC
//   D_r blocks (m, p, m, mC): same S pattern with Im, dF Ip, I_mC
// ============================================================================

struct DScales {
  Eigen::Matrix2cd S = Eigen::Matrix2cd::Identity();
  double dF = 1.0;

  void validate() const {
    if (!(dF > 0.0)) throw ScaleNotPD("DScales: dF must be positive");
    if ((S - S.adjoint()).norm() > 1e-12 * std::max(1.0, S.norm()))
      throw ScaleNotPD("DScales: S must be Hermitian");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(S);
    if (!(es.eigenvalues().minCoeff() > 0.0))
      throw ScaleNotPD("DScales: S must be positive definite");
  }
};

namespace detail {

/// Expands the (S, g) scale pair onto blocks (sz, szF, sz, szP).
inline ComplexMatrix expand_scales(const Eigen::Matrix2cd& S, double g, Eigen::Index sz,
                                   Eigen::Index szF, Eigen::Index szP) {
  const Eigen::Index n = 2 * sz + szF + szP;
  ComplexMatrix D = ComplexMatrix::Zero(n, n);
  D.block(0, 0, sz, sz) = S(0, 0) * ComplexMatrix::Identity(sz, sz);
  D.block(0, sz + szF, sz, sz) = S(0, 1) * ComplexMatrix::Identity(sz, sz);
  D.block(sz + szF, 0, sz, sz) = S(1, 0) * ComplexMatrix::Identity(sz, sz);
  D.block(sz + szF, sz + szF, sz, sz) = S(1, 1) * ComplexMatrix::Identity(sz, sz);
  D.block(sz, sz, szF, szF) = g * ComplexMatrix::Identity(szF, szF);
  D.block(2 * sz + szF, 2 * sz + szF, szP, szP).setIdentity();
  return D;
}

struct ScaleFactors {
  ComplexMatrix left_inv_sqrt;   // D_l^{-1/2}
  ComplexMatrix right_sqrt;      // D_r^{1/2}
  ComplexMatrix left;            // D_l
  ComplexMatrix right;           // D_r
  ComplexMatrix right_inv;       // D_r^{-1}
};

inline ScaleFactors scale_factors(const DScales& sc, const BlockDims& d) {
  sc.validate();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(sc.S);
  const Eigen::Vector2d lam = es.eigenvalues();
  Eigen::Matrix2cd Ssqrt =
      es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
  Eigen::Matrix2cd Sinvsqrt = es.eigenvectors() * lam.cwiseSqrt().cwiseInverse().asDiagonal() *
                              es.eigenvectors().adjoint();
  Eigen::Matrix2cd Sinv = es.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                          es.eigenvectors().adjoint();
  ScaleFactors f;
  f.left_inv_sqrt = expand_scales(Sinvsqrt, 1.0 / std::sqrt(sc.dF), d.p, d.m, d.pC);
  f.right_sqrt = expand_scales(Ssqrt, std::sqrt(sc.dF), d.m, d.p, d.mC);
  f.left = expand_scales(sc.S, sc.dF, d.p, d.m, d.pC);
  f.right = expand_scales(sc.S, sc.dF, d.m, d.p, d.mC);
  f.right_inv = expand_scales(Sinv, 1.0 / sc.dF, d.m, d.p, d.mC);
  return f;
}

}  // namespace detail

/// mu upper bound at one frequency: sigma_max(D_l^{-1/2} N D_r^{1/2}).
inline double scaled_gain(const ComplexMatrix& Nmat, const DScales& scales,
                          const BlockDims& d) {
  if (Nmat.rows() != d.n_out() || Nmat.cols() != d.n_in())
    throw DimensionMismatch("scaled_gain: N dimensions do not match the block pattern");
  detail::ScaleFactors f = detail::scale_factors(scales, d);
  return spectral_norm(ComplexMatrix(f.left_inv_sqrt * Nmat * f.right_sqrt));
}

/// Requirement LMI at one frequency: N D_r N^H <= D_l (up to 1e-9 slack),
/// equivalent to scaled_gain <= 1.
inline bool check_req_lmi(const ComplexMatrix& Nmat, const DScales& scales,
                          const BlockDims& d) {
  if (Nmat.rows() != d.n_out() || Nmat.cols() != d.n_in())
    throw DimensionMismatch("check_req_lmi: N dimensions do not match the block pattern");
  detail::ScaleFactors f = detail::scale_factors(scales, d);
  ComplexMatrix X = f.left_inv_sqrt * Nmat * f.right * Nmat.adjoint() * f.left_inv_sqrt;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (X + X.adjoint()));
  return es.eigenvalues().maxCoeff() <= 1.0 + 1e-9;
}

// ============================================================================
// Constant positive-diagonal weighting (trivially bistable / biproper).
// Left (output side): blocks (vE: p, vF: m, vE: p, vC: pC).
// Right (input side): blocks (wE: m, wF: p, wE: m, wC: mC).
// Error-set semantics: ||W_E^{-1} XiE22 V_E^{-1}|| <= 1 etc. for the E/F
// channels, ||V_C Ec W_C|| <= 1 (non-inverted) for the coupled channel.
// ============================================================================

struct WeightSpec {
  Vector vE, vF, vC, wE, wF, wC;

  static WeightSpec identity(const BlockDims& d) {
    WeightSpec s;
    s.vE = Vector::Ones(d.p);
    s.vF = Vector::Ones(d.m);
    s.vC = Vector::Ones(d.pC);
    s.wE = Vector::Ones(d.m);
    s.wF = Vector::Ones(d.p);
    s.wC = Vector::Ones(d.mC);
    return s;
  }

  void validate(const BlockDims& d) const {
    auto chk = [](const Vector& v, Eigen::Index n, const char* nm) {
      if (v.size() != n) throw DimensionMismatch(std::string("WeightSpec: bad size for ") + nm);
      for (Eigen::Index i = 0; i < n; ++i)
        if (!(v[i] > 0.0))
          throw DimensionMismatch(std::string("WeightSpec: nonpositive entry in ") + nm);
    };
    chk(vE, d.p, "vE");
    chk(vF, d.m, "vF");
    chk(vC, d.pC, "vC");
    chk(wE, d.m, "wE");
    chk(wF, d.p, "wF");
    chk(wC, d.mC, "wC");
  }

  Vector left_diag(const BlockDims& d) const {
    Vector out(d.n_out());
    out << vE, vF, vE, vC;
    return out;
  }
  Vector right_diag(const BlockDims& d) const {
    Vector out(d.n_in());
    out << wE, wF, wE, wC;
    return out;
  }
};

/// Weighted nominal matrix V N W at one frequency.
inline ComplexMatrix weighted_n(const ComplexMatrix& Nmat, const WeightSpec& w,
                                const BlockDims& d) {
  return w.left_diag(d).asDiagonal().toDenseMatrix().cast<Complex>() * Nmat *
         w.right_diag(d).asDiagonal().toDenseMatrix().cast<Complex>();
}

// ============================================================================
// D-scale search: deterministic coordinate descent on the 5 real parameters
// (log s11, log s22, Re s12, Im s12, log dF), minimizing a caller-supplied
// objective (worst scaled gain over a frequency set, or a single-point gain).
// ============================================================================

namespace detail {

inline DScales decode_scales(const std::array<double, 5>& x) {
  DScales sc;
  sc.S(0, 0) = std::exp(x[0]);
  sc.S(1, 1) = std::exp(x[1]);
  sc.S(0, 1) = Complex(x[2], x[3]);
  sc.S(1, 0) = std::conj(sc.S(0, 1));
  sc.dF = std::exp(x[4]);
  return sc;
}

inline bool scales_pd(const std::array<double, 5>& x) {
  return std::exp(x[0]) * std::exp(x[1]) - (x[2] * x[2] + x[3] * x[3]) >
         1e-12 * std::exp(x[0]) * std::exp(x[1]);
}

/// Minimizes obj(D) by coordinate descent; returns the best scales found.
inline DScales minimize_over_scales(const std::function<double(const DScales&)>& obj,
                                    const DScales& init, int max_sweeps = 60) {
  std::array<double, 5> x{};
  x[0] = std::log(std::real(init.S(0, 0)));
  x[1] = std::log(std::real(init.S(1, 1)));
  x[2] = std::real(init.S(0, 1));
  x[3] = std::imag(init.S(0, 1));
  x[4] = std::log(init.dF);
  double best = obj(decode_scales(x));
  std::array<double, 5> step{0.5, 0.5, 0.25, 0.25, 0.5};
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool improved = false;
    for (int i = 0; i < 5; ++i) {
      for (double sgn : {+1.0, -1.0}) {
        std::array<double, 5> cand = x;
        cand[i] += sgn * step[i];
        if (!scales_pd(cand)) continue;
        const double val = obj(decode_scales(cand));
        if (val < best * (1.0 - 1e-12)) {
          best = val;
          x = cand;
          improved = true;
          break;
        }
      }
    }
    if (!improved) {
      bool any = false;
      for (int i = 0; i < 5; ++i) {
        step[i] *= 0.5;
        if (step[i] > 1e-4) any = true;
      }
      if (!any) break;
    }
  }
  return decode_scales(x);
}

}  // namespace detail

// ============================================================================
// Theorem-2 style certificate: one frequency-independent D-scale pair over the
// whole grid (plus geometric midpoints); grid satisfaction approximates the
// forall-omega claim and the report says so.
// ============================================================================

struct CertificateReport {
  bool feasible = false;
  DScales scales;
  double worst_gain = 0.0;
  double worst_omega = 0.0;
  std::string scope_note;
};

namespace detail {

inline std::vector<ComplexMatrix> eval_weighted_grid(const NominalN& N, const WeightSpec& w,
                                                     const FrequencyGrid& grid) {
  std::vector<ComplexMatrix> out(grid.size());
  std::exception_ptr err;
  std::mutex mx;
  parallel_for(grid.size(), [&](std::size_t k) {
    try {
      out[k] = weighted_n(N.eval_at(grid[k]), w, N.dims);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mx);
      if (!err) err = std::current_exception();
    }
  });
  if (err) std::rethrow_exception(err);
  return out;
}

struct WorstGain {
  double gain = 0.0;
  double omega = 0.0;
};

inline WorstGain worst_scaled_gain(const std::vector<ComplexMatrix>& Ns,
                                   const FrequencyGrid& grid, const DScales& sc,
                                   const BlockDims& d) {
  WorstGain w;
  for (std::size_t k = 0; k < Ns.size(); ++k) {
    const double g = scaled_gain(Ns[k], sc, d);
    if (g > w.gain) {
      w.gain = g;
      w.omega = grid[k];
    }
  }
  return w;
}

}  // namespace detail

inline CertificateReport certify_hinf(const NominalN& N, const WeightSpec& weights,
                                      const FrequencyGrid& grid) {
  weights.validate(N.dims);
  if (!is_stable(N.N)) throw UnstableNominal("certify_hinf: nominal N must be stable");
  FrequencyGrid dense = grid.with_midpoints();
  std::vector<ComplexMatrix> Ns = detail::eval_weighted_grid(N, weights, dense);

  auto obj = [&](const DScales& sc) {
    return detail::worst_scaled_gain(Ns, dense, sc, N.dims).gain;
  };
  DScales best = detail::minimize_over_scales(obj, DScales{});
  detail::WorstGain w = detail::worst_scaled_gain(Ns, dense, best, N.dims);

  if (!(w.gain <= 1.0 + 1e-9))
    throw Infeasible("certify_hinf: no admissible D-scales found (worst scaled gain " +
                         std::to_string(w.gain) + " at omega " + std::to_string(w.omega) + ")",
                     w.gain, w.omega);
  CertificateReport rep;
  rep.feasible = true;
  rep.scales = best;
  rep.worst_gain = w.gain;
  rep.worst_omega = w.omega;
  rep.scope_note =
      "certificate holds on the supplied grid plus geometric midpoints; it approximates the "
      "forall-omega requirement";
  return rep;
}

// ============================================================================
// Theorem-4 budget optimization: maximize epsE^2 + beta epsF^2 over the ray
// parameterization, alternating with D-scale updates. Budgets are the Hinf
// bounds on the weighted errors; the C channel carries the coupled spec.
// ============================================================================

struct HinfBudgetOptions {
  double eps_cap = 1e6;
  int outer_iters = 12;
  double rel_tol = 1e-6;
};

struct HinfBudgetResult {
  double eps_E = 0.0;
  double eps_F = 0.0;
  DScales scales;
  bool converged = true;
  bool unbounded = false;  // budgets hit eps_cap (e.g. N = 0)
  double worst_gain = 0.0; // at the returned budgets and scales
};

/// `weights` carries the normalized Vbar on the left side (vE, vF, vC) and W
/// on the right side (wE, wF, wC); the optimizer scales the left E/F blocks
/// by the budgets it maximizes.
inline HinfBudgetResult optimize_budget_hinf(const NominalN& N, const WeightSpec& weights,
                                             double beta, const FrequencyGrid& grid,
                                             HinfBudgetOptions opts = {}) {
  if (!(beta > 0.0)) throw DimensionMismatch("optimize_budget_hinf: beta must be positive");
  weights.validate(N.dims);
  FrequencyGrid dense = grid.with_midpoints();
  std::vector<ComplexMatrix> Ns = detail::eval_weighted_grid(N, weights, dense);

  const BlockDims& d = N.dims;
  auto scale_rows = [&](const ComplexMatrix& M, double eE, double eF) {
    ComplexMatrix out = M;
    out.topRows(d.p) *= eE;
    out.middleRows(d.p, d.m) *= eF;
    out.middleRows(d.p + d.m, d.p) *= eE;
    return out;
  };
  auto feasible = [&](double eE, double eF, const DScales& sc) {
    for (const auto& M : Ns)
      if (!check_req_lmi(scale_rows(M, eE, eF), sc, d)) return false;
    return true;
  };
  auto scaled_set = [&](double eE, double eF) {
    std::vector<ComplexMatrix> out;
    out.reserve(Ns.size());
    for (const auto& M : Ns) out.push_back(scale_rows(M, eE, eF));
    return out;
  };

  auto ray_max = [&](double theta, const DScales& sc) -> double {
    const double ce = std::cos(theta), se = std::sin(theta);
    double lo = 0.0, hi = 1.0;
    while (feasible(hi * ce, hi * se, sc) && hi < 4.0 * opts.eps_cap) {
      lo = hi;
      hi *= 2.0;
    }
    for (int it = 0; it < 60 && (hi - lo) > 1e-9 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid * ce, mid * se, sc))
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  };

  DScales sc{};
  // Infeasibility even at zero budgets means the coupled spec itself cannot
  // be certified (the performance row alone violates the LMI for every D
  // tried); distinguish that from optimizer failure up front.
  if (!feasible(0.0, 0.0, sc)) {
    std::vector<ComplexMatrix> zs = scaled_set(0.0, 0.0);
    sc = detail::minimize_over_scales(
        [&](const DScales& s) { return detail::worst_scaled_gain(zs, dense, s, d).gain; }, sc);
    if (!feasible(0.0, 0.0, sc)) {
      detail::WorstGain wg = detail::worst_scaled_gain(zs, dense, sc, d);
      throw Infeasible("optimize_budget_hinf: coupled spec unattainable even with exact models",
                       wg.gain, wg.omega);
    }
  }

  double theta = std::atan(std::sqrt(beta));
  double eE = 0.0, eF = 0.0, objective = 0.0;
  bool converged = false;

  for (int outer = 0; outer < opts.outer_iters; ++outer) {
    // theta line search at fixed scales
    double best_obj = -1.0, best_theta = theta, best_eE = 0.0, best_eF = 0.0;
    const double span = outer == 0 ? 0.6 : 0.2;
    for (int k = -3; k <= 3; ++k) {
      const double th = std::clamp(theta + span * k / 3.0, 1e-3, M_PI / 2.0 - 1e-3);
      const double t = ray_max(th, sc);
      const double ce = t * std::cos(th), se = t * std::sin(th);
      const double obj = ce * ce + beta * se * se;
      if (obj > best_obj) {
        best_obj = obj;
        best_theta = th;
        best_eE = ce;
        best_eF = se;
      }
    }
    theta = best_theta;
    eE = best_eE;
    eF = best_eF;

    if (eE >= opts.eps_cap && eF >= opts.eps_cap) break;  // unbounded; cap below

    // D step at fixed budgets: minimize the worst scaled gain.
    std::vector<ComplexMatrix> scaled = scaled_set(eE, eF);
    sc = detail::minimize_over_scales(
        [&](const DScales& s) { return detail::worst_scaled_gain(scaled, dense, s, d).gain; },
        sc);

    if (best_obj <= objective * (1.0 + opts.rel_tol) && outer > 0) {
      objective = std::max(objective, best_obj);
      converged = true;
      break;
    }
    objective = best_obj;
  }

  HinfBudgetResult res;
  res.unbounded = eE >= opts.eps_cap && eF >= opts.eps_cap;
  res.eps_E = std::min(eE, opts.eps_cap);
  res.eps_F = std::min(eF, opts.eps_cap);
  res.scales = sc;
  res.converged = converged || res.unbounded;

  // Feasibility replay of the returned iterate.
  if (!feasible(res.eps_E, res.eps_F, res.scales)) {
    double shrink = 1.0 - 1e-9;
    int guard = 0;
    while (!feasible(res.eps_E * shrink, res.eps_F * shrink, res.scales) && guard++ < 60)
      shrink *= 0.999999;
    res.eps_E *= shrink;
    res.eps_F *= shrink;
  }
  std::vector<ComplexMatrix> fin;
  fin.reserve(Ns.size());
  for (const auto& M : Ns) fin.push_back(scale_rows(M, res.eps_E, res.eps_F));
  res.worst_gain = detail::worst_scaled_gain(fin, dense, res.scales, d).gain;
  return res;
}

// ============================================================================
// Theorem-5 per-frequency budget optimization: minimize
// trace(X_V V^{-2}) + trace(X_W W^{-2}) over diagonal weights subject to the
// Schur-complement LMI, alternating a log-det barrier SDP in the inverse
// squared weights with D-scale updates. The C channels stay pinned.
// ============================================================================

struct FreqBudgetOptions {
  double weight_cap = 1e6;   // upper cap on any weight entry
  int outer_iters = 6;
  int barrier_max_newton = 400;
  double gap_tol = 1e-8;
  bool scalar_blocks = false;  // tie v = w and all entries per block (scalar x I)
};

struct FreqBudgetResult {
  Vector vE, vF, wE, wF;  // positive diagonals of the returned weights
  DScales scales;
  bool feasible = false;
  bool converged = true;
  bool at_cap = false;
  double objective = 0.0;
};

namespace detail {

struct FreqSdp {
  // G(x) = [[W^{-2} Dr^{-1}, N^H], [N, V^{-2} Dl]]; x holds the free inverse
  // squared weights; C channels contribute fixed summands.
  ComplexMatrix Gfixed;                  // pinned blocks (C channels) + N couplings
  std::vector<ComplexMatrix> A;          // dG/dx_i (Hermitian)
  Vector c;                              // objective coefficients
  Eigen::Index ng = 0;

  ComplexMatrix G(const Vector& x) const {
    ComplexMatrix out = Gfixed;
    for (Eigen::Index i = 0; i < x.size(); ++i) out += x[i] * A[static_cast<std::size_t>(i)];
    return out;
  }
};

inline FreqSdp build_freq_sdp(const ComplexMatrix& Nmat, const BlockDims& d,
                              const Vector& vC, const Vector& wC, double beta,
                              const DScales& sc, bool scalar_blocks) {
  const Eigen::Index nin = d.n_in(), nout = d.n_out();
  ScaleFactors f = scale_factors(sc, d);
  FreqSdp sdp;
  sdp.ng = nin + nout;
  sdp.Gfixed = ComplexMatrix::Zero(sdp.ng, sdp.ng);
  sdp.Gfixed.block(0, nin, nin, nout) = Nmat.adjoint();
  sdp.Gfixed.block(nin, 0, nout, nin) = Nmat;

  // index maps for the diagonal placements
  auto wslot = [&](Eigen::Index pos) { return pos; };            // into block (1,1)
  auto vslot = [&](Eigen::Index pos) { return nin + pos; };      // into block (2,2)

  // pinned C channels: W^{-2} Dr^{-1} on (mC tail), V^{-2} Dl on (pC tail)
  for (Eigen::Index i = 0; i < d.mC; ++i) {
    const Eigen::Index pos = 2 * d.m + d.p + i;
    sdp.Gfixed(wslot(pos), wslot(pos)) =
        f.right_inv(pos, pos) / (wC[i] * wC[i]);
  }
  for (Eigen::Index i = 0; i < d.pC; ++i) {
    const Eigen::Index pos = 2 * d.p + d.m + i;
    sdp.Gfixed(vslot(pos), vslot(pos)) = f.left(pos, pos) / (vC[i] * vC[i]);
  }

  // helper adding one variable with the given diagonal placements
  auto add_var = [&](const std::vector<std::pair<char, Eigen::Index>>& places, double cost) {
    ComplexMatrix Ai = ComplexMatrix::Zero(sdp.ng, sdp.ng);
    for (auto [side, pos] : places) {
      if (side == 'w') {
        // rows of Dr^{-1} at this position (S-structured couplings included)
        for (Eigen::Index qq = 0; qq < d.n_in(); ++qq) {
          const Complex val = f.right_inv(pos, qq);
          if (val != Complex(0, 0)) Ai(wslot(pos), wslot(qq)) += val;
        }
      } else {
        for (Eigen::Index qq = 0; qq < d.n_out(); ++qq) {
          const Complex val = f.left(pos, qq);
          if (val != Complex(0, 0)) Ai(vslot(pos), vslot(qq)) += val;
        }
      }
    }
    Ai = ComplexMatrix(0.5 * (Ai + Ai.adjoint()));
    sdp.A.push_back(std::move(Ai));
    return cost;
  };

  std::vector<double> costs;
  if (scalar_blocks) {
    // x0 = epsE^{-1}: all E placements on both sides; x1 = epsF^{-1}.
    std::vector<std::pair<char, Eigen::Index>> eplaces, fplaces;
    for (Eigen::Index i = 0; i < d.m; ++i) {
      eplaces.push_back({'w', i});
      eplaces.push_back({'w', d.m + d.p + i});
    }
    for (Eigen::Index i = 0; i < d.p; ++i) {
      eplaces.push_back({'v', i});
      eplaces.push_back({'v', d.p + d.m + i});
    }
    for (Eigen::Index i = 0; i < d.p; ++i) fplaces.push_back({'w', d.m + i});
    for (Eigen::Index i = 0; i < d.m; ++i) fplaces.push_back({'v', d.p + i});
    costs.push_back(add_var(eplaces, 2.0 * (d.m + d.p)));
    costs.push_back(add_var(fplaces, beta * (d.m + d.p)));
  } else {
    // vE_i (paired across blocks 1 and 3 on the V side)
    for (Eigen::Index i = 0; i < d.p; ++i)
      costs.push_back(add_var({{'v', i}, {'v', d.p + d.m + i}}, 2.0));
    for (Eigen::Index i = 0; i < d.m; ++i) costs.push_back(add_var({{'v', d.p + i}}, beta));
    for (Eigen::Index i = 0; i < d.m; ++i)
      costs.push_back(add_var({{'w', i}, {'w', d.m + d.p + i}}, 2.0));
    for (Eigen::Index i = 0; i < d.p; ++i) costs.push_back(add_var({{'w', d.m + i}}, beta));
  }
  sdp.c = Eigen::Map<Vector>(costs.data(), static_cast<Eigen::Index>(costs.size()));
  return sdp;
}

/// Log-det barrier interior point over x > xlo with G(x) > 0.
/// Returns false if no strictly feasible start could be found.
inline bool solve_freq_sdp(const FreqSdp& sdp, const Vector& xlo, Vector& x, double gap_tol,
                           int max_newton) {
  const Eigen::Index K = sdp.c.size();
  auto pd = [&](const Vector& xx) {
    Eigen::LLT<ComplexMatrix> llt(sdp.G(xx));
    return llt.info() == Eigen::Success;
  };
  // feasible start: scale up uniformly until PD
  if (x.size() != K) x = Vector::Ones(K);
  for (Eigen::Index i = 0; i < K; ++i) x[i] = std::max(x[i], xlo[i] * 1.5 + 1e-18);
  int guard = 0;
  while (!pd(x)) {
    x *= 4.0;
    if (++guard > 200) return false;
  }
  x *= 4.0;

  double t = 1.0;
  const double nbar = static_cast<double>(sdp.ng + K);
  int newton_used = 0;
  while (nbar / t > gap_tol * std::max(1.0, std::abs(sdp.c.dot(x)))) {
    // centering steps
    for (int it = 0; it < 50; ++it) {
      ComplexMatrix G = sdp.G(x);
      Eigen::LLT<ComplexMatrix> llt(G);
      if (llt.info() != Eigen::Success) return false;
      ComplexMatrix Ginv = llt.solve(ComplexMatrix::Identity(sdp.ng, sdp.ng));
      Vector grad(K);
      std::vector<ComplexMatrix> B(static_cast<std::size_t>(K));
      for (Eigen::Index i = 0; i < K; ++i) {
        B[static_cast<std::size_t>(i)] = Ginv * sdp.A[static_cast<std::size_t>(i)];
        grad[i] = t * sdp.c[i] - B[static_cast<std::size_t>(i)].real().trace() -
                  1.0 / (x[i] - xlo[i]);
      }
      Matrix H(K, K);
      for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = i; j < K; ++j) {
          const double hij =
              (B[static_cast<std::size_t>(i)].cwiseProduct(
                   B[static_cast<std::size_t>(j)].transpose()))
                  .sum()
                  .real();
          H(i, j) = hij;
          H(j, i) = hij;
        }
      for (Eigen::Index i = 0; i < K; ++i)
        H(i, i) += 1.0 / ((x[i] - xlo[i]) * (x[i] - xlo[i]));
      Vector dx = H.ldlt().solve(-grad);
      const double lambda2 = -grad.dot(dx);
      if (!(dx.allFinite())) break;
      // backtracking to stay strictly feasible
      double alpha = 1.0;
      for (int bt = 0; bt < 60; ++bt) {
        Vector xn = x + alpha * dx;
        bool ok = true;
        for (Eigen::Index i = 0; i < K; ++i)
          if (!(xn[i] > xlo[i])) ok = false;
        if (ok && pd(xn)) {
          x = xn;
          break;
        }
        alpha *= 0.5;
      }
      if (++newton_used > max_newton) return true;  // best effort
      if (lambda2 < 1e-10) break;
    }
    t *= 8.0;
  }
  return true;
}

}  // namespace detail

inline FreqBudgetResult optimize_budget_freq(const ComplexMatrix& Nmat, const BlockDims& d,
                                             const Vector& vC, const Vector& wC, double beta,
                                             FreqBudgetOptions opts = {}) {
  if (!(beta > 0.0)) throw DimensionMismatch("optimize_budget_freq: beta must be positive");
  if (!Nmat.allFinite()) throw NumericalFailure("optimize_budget_freq: N not finite");
  if (vC.size() != d.pC || wC.size() != d.mC)
    throw DimensionMismatch("optimize_budget_freq: coupled weight sizes");
  for (Eigen::Index i = 0; i < vC.size(); ++i)
    if (!(vC[i] > 0.0)) throw DimensionMismatch("optimize_budget_freq: vC must be positive");
  for (Eigen::Index i = 0; i < wC.size(); ++i)
    if (!(wC[i] > 0.0)) throw DimensionMismatch("optimize_budget_freq: wC must be positive");

  // The pinned performance corner bounds feasibility outright: the LMI
  // restricted to the C channels requires sigma_max(Vc N44 Wc) < 1 no matter
  // how small the budgets get. (The nominal N always has N44 = 0.)
  {
    ComplexMatrix N44 = Nmat.bottomRightCorner(d.pC, d.mC);
    const double g44 = spectral_norm(
        ComplexMatrix(vC.asDiagonal().toDenseMatrix().cast<Complex>() * N44 *
                      wC.asDiagonal().toDenseMatrix().cast<Complex>()));
    if (!(g44 < 1.0))
      throw Infeasible(
          "optimize_budget_freq: coupled spec violated by the direct performance term",
          g44, 0.0);
  }

  DScales sc{};
  Vector x;
  double prev_obj = std::numeric_limits<double>::infinity();
  bool converged = false;
  const double xlo_val = 1.0 / (opts.weight_cap * opts.weight_cap);

  detail::FreqSdp sdp;
  for (int outer = 0; outer < opts.outer_iters; ++outer) {
    sdp = detail::build_freq_sdp(Nmat, d, vC, wC, beta, sc, opts.scalar_blocks);
    Vector xlo = Vector::Constant(sdp.c.size(), xlo_val);
    if (!detail::solve_freq_sdp(sdp, xlo, x, opts.gap_tol, opts.barrier_max_newton))
      throw Infeasible("optimize_budget_freq: barrier solve failed to find a feasible point",
                       std::numeric_limits<double>::infinity(), 0.0);
    const double obj = sdp.c.dot(x);
    // D step: with weights fixed, minimize the scaled gain of V N W.
    WeightSpec wspec;
    {
      if (opts.scalar_blocks) {
        wspec.vE = Vector::Constant(d.p, 1.0 / std::sqrt(x[0]));
        wspec.wE = Vector::Constant(d.m, 1.0 / std::sqrt(x[0]));
        wspec.vF = Vector::Constant(d.m, 1.0 / std::sqrt(x[1]));
        wspec.wF = Vector::Constant(d.p, 1.0 / std::sqrt(x[1]));
      } else {
        wspec.vE = x.segment(0, d.p).cwiseSqrt().cwiseInverse();
        wspec.vF = x.segment(d.p, d.m).cwiseSqrt().cwiseInverse();
        wspec.wE = x.segment(d.p + d.m, d.m).cwiseSqrt().cwiseInverse();
        wspec.wF = x.segment(d.p + 2 * d.m, d.p).cwiseSqrt().cwiseInverse();
      }
      wspec.vC = vC;
      wspec.wC = wC;
    }
    ComplexMatrix Nw = weighted_n(Nmat, wspec, d);
    sc = detail::minimize_over_scales(
        [&](const DScales& s) { return scaled_gain(Nw, s, d); }, sc, 40);

    if (std::abs(prev_obj - obj) <= 1e-6 * std::max(1.0, std::abs(obj)) && outer > 0) {
      prev_obj = obj;
      converged = true;
      break;
    }
    prev_obj = obj;
  }

  // Final SDP at the last scales so the returned (weights, scales) pair is
  // jointly feasible by construction.
  sdp = detail::build_freq_sdp(Nmat, d, vC, wC, beta, sc, opts.scalar_blocks);
  Vector xlo = Vector::Constant(sdp.c.size(), xlo_val);
  if (!detail::solve_freq_sdp(sdp, xlo, x, opts.gap_tol, opts.barrier_max_newton))
    throw Infeasible("optimize_budget_freq: barrier solve failed", 0.0, 0.0);

  // Boundary polish: an interior-point iterate cannot reach the cap exactly;
  // when the LMI holds at the cap itself, the budgets are unconstrained.
  {
    Eigen::LLT<ComplexMatrix> lcap(sdp.G(xlo));
    if (lcap.info() == Eigen::Success) x = xlo;
  }

  FreqBudgetResult res;
  if (opts.scalar_blocks) {
    res.vE = Vector::Constant(d.p, 1.0 / std::sqrt(x[0]));
    res.wE = Vector::Constant(d.m, 1.0 / std::sqrt(x[0]));
    res.vF = Vector::Constant(d.m, 1.0 / std::sqrt(x[1]));
    res.wF = Vector::Constant(d.p, 1.0 / std::sqrt(x[1]));
  } else {
    res.vE = x.segment(0, d.p).cwiseSqrt().cwiseInverse();
    res.vF = x.segment(d.p, d.m).cwiseSqrt().cwiseInverse();
    res.wE = x.segment(d.p + d.m, d.m).cwiseSqrt().cwiseInverse();
    res.wF = x.segment(d.p + 2 * d.m, d.p).cwiseSqrt().cwiseInverse();
  }
  res.scales = sc;
  res.converged = converged;
  res.objective = sdp.c.dot(x);
  res.at_cap = false;
  const double cap_hi = opts.weight_cap * 0.99;
  for (const Vector* v : {&res.vE, &res.vF, &res.wE, &res.wF})
    for (Eigen::Index i = 0; i < v->size(); ++i)
      if ((*v)[i] >= cap_hi) res.at_cap = true;

  // Feasibility replay: the Schur block at the returned point must be PD.
  Eigen::LLT<ComplexMatrix> llt(sdp.G(x));
  res.feasible = llt.info() == Eigen::Success;
  return res;
}

/// Converts scalar-times-identity weights back to the (eps_E, eps_F) form.
inline std::pair<double, double> simplify_to_scalar_budget(const Vector& vE, const Vector& vF,
                                                           const Vector& wE,
                                                           const Vector& wF) {
  auto all_equal = [](const Vector& v, double ref) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (std::abs(v[i] - ref) > 1e-9 * std::abs(ref)) return false;
    return true;
  };
  if (vE.size() == 0 || vF.size() == 0)
    throw NotScalarForm("simplify_to_scalar_budget: empty weights");
  const double sE = vE[0], sF = vF[0];
  if (!all_equal(vE, sE) || !all_equal(wE, sE) || !all_equal(vF, sF) || !all_equal(wF, sF))
    throw NotScalarForm("simplify_to_scalar_budget: weights are not scalar-times-identity");
  return {sE * sE, sF * sF};
}

// ============================================================================
// Error budget container and CSV form
// ============================================================================

struct ErrorBudget {
  FrequencyGrid grid;
  std::vector<double> eps_E, eps_F, eps_C;
  double beta = 1.0;

  ErrorBudget(FrequencyGrid g, std::vector<double> eE, std::vector<double> eF,
              std::vector<double> eC, double beta_)
      : grid(std::move(g)),
        eps_E(std::move(eE)),
        eps_F(std::move(eF)),
        eps_C(std::move(eC)),
        beta(beta_) {
    if (eps_E.size() != grid.size() || eps_F.size() != grid.size() ||
        eps_C.size() != grid.size())
      throw DimensionMismatch("ErrorBudget: curve lengths must match the grid");
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (!(eps_E[k] > 0.0) || !(eps_F[k] > 0.0) || !(eps_C[k] > 0.0))
        throw DimensionMismatch("ErrorBudget: entries must be positive");
    if (!(beta > 0.0)) throw DimensionMismatch("ErrorBudget: beta must be positive");
  }

  void write_csv(std::ostream& out) const {
    out << "omega_rad_s,eps_E,eps_F,eps_C\n";
    for (std::size_t k = 0; k < grid.size(); ++k)
      out << format_double(grid[k]) << ',' << format_double(eps_E[k]) << ','
          << format_double(eps_F[k]) << ',' << format_double(eps_C[k]) << '\n';
  }
};

inline void write_norm_curve_csv(std::ostream& out, const NormCurve& curve) {
  out << "omega_rad_s,value\n";
  for (std::size_t k = 0; k < curve.grid.size(); ++k)
    out << format_double(curve.grid[k]) << ',' << format_double(curve.values[k]) << '\n';
}

}  // namespace absred
