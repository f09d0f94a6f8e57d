#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "absred/errors.hpp"
#include "absred/state_space.hpp"

namespace absred {

// ============================================================================
// Spectral norm and per-frequency norm curves
// ============================================================================

/// Largest singular value (2-induced norm).
inline double spectral_norm(const ComplexMatrix& M) {
  if (M.rows() == 0 || M.cols() == 0) return 0.0;
  return Eigen::JacobiSVD<ComplexMatrix>(M).singularValues()(0);
}

inline double spectral_norm(const Matrix& M) {
  if (M.rows() == 0 || M.cols() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(M).singularValues()(0);
}

struct NormCurve {
  NormCurve(FrequencyGrid grid_, std::vector<double> values_)
      : grid(std::move(grid_)), values(std::move(values_)) {
    if (values.size() != grid.size())
      throw DimensionMismatch("NormCurve: values/grid length mismatch");
  }
  FrequencyGrid grid;
  std::vector<double> values;

  double max_value() const {
    double mx = 0.0;
    for (double v : values) mx = std::max(mx, v);
    return mx;
  }
};

/// Spectral norm of the FRF per grid point.
inline NormCurve norm_curve(const StateSpace& sys, const FrequencyGrid& grid) {
  FrfData data = frf(sys, grid);
  std::vector<double> vals(grid.size());
  for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = spectral_norm(data.values[k]);
  return NormCurve(grid, std::move(vals));
}

// ============================================================================
// H-infinity norm via the Hamiltonian test (Bruinsma-Steinbuch iteration)
// ============================================================================

namespace detail {

/// Imaginary parts of the purely imaginary eigenvalues of the Hamiltonian
/// H(gamma). Empty result certifies ||G||_inf < gamma. A gamma at or below
/// the feedthrough norm is reported as a crossing at omega = +inf.
inline std::vector<double> hamiltonian_imag_crossings(const StateSpace& sys, double gamma) {
  const Eigen::Index n = sys.n(), m = sys.m();
  Matrix R = gamma * gamma * Matrix::Identity(m, m) - sys.D.transpose() * sys.D;
  Eigen::LLT<Matrix> Rf(R);
  if (Rf.info() != Eigen::Success)
    return {std::numeric_limits<double>::infinity()};  // gamma <= sigma_max(D) <= norm
  Matrix RiDtC = Rf.solve(sys.D.transpose() * sys.C);
  Matrix RiBt = Rf.solve(sys.B.transpose());
  Matrix Abar = sys.A + sys.B * RiDtC;
  Matrix H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = Abar;
  H.topRightCorner(n, n) = sys.B * RiBt;
  H.bottomLeftCorner(n, n) = -sys.C.transpose() * (sys.C + sys.D * RiDtC);
  H.bottomRightCorner(n, n) = -Abar.transpose();

  ComplexVector ev = eigenvalues(H);
  double scale = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) scale = std::max(scale, std::abs(ev[i]));
  std::vector<double> ws;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i].real()) <= 1e-8 * std::max(1.0, scale) && ev[i].imag() >= 0.0)
      ws.push_back(ev[i].imag());
  }
  std::sort(ws.begin(), ws.end());
  return ws;
}

}  // namespace detail

/// H-infinity norm of a stable system with relative accuracy rel_tol.
inline double hinf_norm(const StateSpace& sys, double rel_tol = 1e-6) {
  if (sys.n() > 0) {
    double mre = max_real_eig(sys.A);
    if (!(mre < 0.0)) throw NotHurwitz("hinf_norm: system is not stable", mre);
  }
  if (sys.m() == 0 || sys.p() == 0) return 0.0;
  const double dnorm = spectral_norm(sys.D);
  if (sys.n() == 0) return dnorm;

  // Starting lower bound: feedthrough norm plus gains at pole frequencies and DC.
  std::set<double> probes{0.0};
  ComplexVector ev = eigenvalues(sys.A);
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    double w = std::abs(ev[i].imag());
    if (w > 0.0) probes.insert(w);
    probes.insert(std::abs(ev[i]));
  }
  double lo = dnorm;
  for (double w : probes) lo = std::max(lo, spectral_norm(eval_tf(sys, Complex(0.0, w))));
  if (lo == 0.0) return 0.0;  // zero transfer everywhere we can see; B or C vanishes

  // Bruinsma-Steinbuch: raise the lower bound from gains at midpoints of the
  // Hamiltonian crossing frequencies until the test at lo*(1+2tol) is clean.
  const int max_iter = 80;
  for (int it = 0; it < max_iter; ++it) {
    const double gamma = lo * (1.0 + 2.0 * rel_tol);
    std::vector<double> ws = detail::hamiltonian_imag_crossings(sys, gamma);
    if (ws.empty()) return lo * (1.0 + rel_tol);
    while (!ws.empty() && !std::isfinite(ws.back())) ws.pop_back();
    double new_lo = lo;
    for (std::size_t k = 0; k + 1 < ws.size(); k += 1) {
      double wm = 0.5 * (ws[k] + ws[k + 1]);
      new_lo = std::max(new_lo, spectral_norm(eval_tf(sys, Complex(0.0, wm))));
    }
    if (ws.size() == 1)
      new_lo = std::max(new_lo, spectral_norm(eval_tf(sys, Complex(0.0, ws[0]))));
    if (!(new_lo > lo)) {
      // No progress from midpoints; fall back to plain bisection on gamma.
      double hi = gamma;
      int guard = 0;
      while (!detail::hamiltonian_imag_crossings(sys, hi).empty()) {
        hi *= 2.0;
        if (++guard > 60) throw BisectionStall("hinf_norm: upper bound search stalled");
      }
      while (hi - lo > rel_tol * hi) {
        double mid = 0.5 * (lo + hi);
        if (detail::hamiltonian_imag_crossings(sys, mid).empty())
          hi = mid;
        else
          lo = mid;
        if (++guard > 400) throw BisectionStall("hinf_norm: bisection stalled");
      }
      return 0.5 * (lo + hi);
    }
    lo = new_lo;
  }
  throw BisectionStall("hinf_norm: did not converge");
}

// ============================================================================
// Banded L2 norm (frequency-domain quadrature over [f_lo, f_hi] in Hz)
// ============================================================================

namespace detail {

// 16-point Gauss-Legendre nodes/weights on [-1, 1].
inline const std::array<double, 8>& gl16_nodes() {
  static const std::array<double, 8> x = {0.0950125098376374, 0.2816035507792589,
                                          0.4580167776572274, 0.6178762444026438,
                                          0.7554044083550030, 0.8656312023878318,
                                          0.9445750230732326, 0.9894009349916499};
  return x;
}
inline const std::array<double, 8>& gl16_weights() {
  static const std::array<double, 8> w = {0.1894506104550685, 0.1826034150449236,
                                          0.1691565193950025, 0.1495959888165767,
                                          0.1246289712555339, 0.0951585116824928,
                                          0.0622535239386479, 0.0271524594117541};
  return w;
}

/// Composite 16-point GL on log-spaced panels of integrand(omega) d omega.
template <typename F>
double log_panel_quadrature(F&& integrand, double w_lo, double w_hi, int panels) {
  const double t_lo = std::log(w_lo), t_hi = std::log(w_hi);
  const auto& xs = gl16_nodes();
  const auto& ws = gl16_weights();
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double a = t_lo + (t_hi - t_lo) * k / panels;
    const double b = t_lo + (t_hi - t_lo) * (k + 1) / panels;
    const double h = 0.5 * (b - a), c = 0.5 * (a + b);
    double acc = 0.0;
    for (int q = 0; q < 8; ++q) {
      for (double sgn : {-1.0, 1.0}) {
        const double t = c + sgn * h * xs[q];
        const double w = std::exp(t);
        acc += ws[q] * integrand(w) * w;  // d omega = omega d t
      }
    }
    total += h * acc;
  }
  return total;
}

}  // namespace detail

/// Banded L2 norm: sqrt of (1/2pi) * integral over [2pi f_lo, 2pi f_hi] of
/// trace(G^H G) d omega, by composite Gauss-Legendre on log-spaced panels,
/// refined until doubling the panel count moves the result by < 0.1%.
inline double l2_norm_band(const StateSpace& sys, double f_lo, double f_hi,
                           int quad_points = 512) {
  if (!(f_lo > 0.0) || !(f_hi > f_lo))
    throw DimensionMismatch("l2_norm_band: need 0 < f_lo < f_hi");
  if (sys.n() > 0) {
    double mre = max_real_eig(sys.A);
    if (!(mre < 0.0)) throw NotHurwitz("l2_norm_band: system is not stable", mre);
  }
  if (sys.m() == 0 || sys.p() == 0) return 0.0;

  auto integrand = [&sys](double w) {
    return eval_tf(sys, Complex(0.0, w)).squaredNorm();  // trace(G^H G)
  };
  const double w_lo = 2.0 * M_PI * f_lo, w_hi = 2.0 * M_PI * f_hi;
  int panels = std::max(4, quad_points / 16);
  double val = detail::log_panel_quadrature(integrand, w_lo, w_hi, panels);
  for (int round = 0; round < 4; ++round) {
    const double refined = detail::log_panel_quadrature(integrand, w_lo, w_hi, 2 * panels);
    const bool converged = std::abs(refined - val) <= 1e-3 * std::max(refined, 1e-300);
    val = refined;
    panels *= 2;
    if (converged) break;
  }
  return std::sqrt(std::max(0.0, val) / (2.0 * M_PI));
}

}  // namespace absred
