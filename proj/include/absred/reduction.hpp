#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

#include "absred/bench_models.hpp"
#include "absred/errors.hpp"
#include "absred/gramians.hpp"
#include "absred/lft.hpp"
#include "absred/state_space.hpp"

namespace absred {

// ============================================================================
// The three reduction strategies compared in the benchmark protocol, plus the
// open-loop environment abstraction step.
// ============================================================================

enum class Method { ssBR, aCLBR, ISBR, env_abstraction };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ssBR: return "ssBR";
    case Method::aCLBR: return "aCLBR";
    case Method::ISBR: return "ISBR";
    case Method::env_abstraction: return "env-abstraction";
  }
  return "?";
}

struct ReductionReport {
  Method method = Method::ssBR;
  Eigen::Index r = 0;
  std::vector<double> hsv_used;
  double wall_time_s = 0.0;
  ReduceStyle style = ReduceStyle::residualize;
};

namespace detail {

class WallTimer {
 public:
  WallTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// Subsystem balanced reduction: balance + truncate/residualize of S alone.
inline std::pair<StateSpace, ReductionReport> ssbr(const StateSpace& S, Eigen::Index r,
                                                   ReduceStyle style,
                                                   bool allow_tie_split = false) {
  if (!(r > 0 && r < S.n()))
    throw BadOrder("ssbr: need 0 < r < n (strict reduction), got r = " + std::to_string(r));
  detail::WallTimer timer;
  BalancingResult bal = balance(S);
  StateSpace Sr = reduce(bal, r, style, allow_tie_split);
  ReductionReport rep{Method::ssBR, r, bal.hsv, timer.seconds(), style};
  return {std::move(Sr), std::move(rep)};
}

/// Closed-loop balanced reduction of Sigma against the augmented (abstracted)
/// environment: Gramians of F_l(F_hat, Sigma) are computed once, Sigma's
/// diagonal sub-blocks are extracted (environment states come first in the
/// LFT realization), and only Sigma's coordinates are transformed.
inline std::pair<StateSpace, ReductionReport> clbr(const StateSpace& S,
                                                   const AugmentedEnvironment& fhat,
                                                   Eigen::Index r, ReduceStyle style,
                                                   bool allow_tie_split = false) {
  if (!(r > 0 && r <= S.n()))
    throw BadOrder("clbr: need 0 < r <= n_Sigma, got r = " + std::to_string(r));
  detail::WallTimer timer;
  StateSpace cl = lower_lft(fhat.fhat, S);
  const double mre = max_real_eig(cl.A);
  if (!(mre < 0.0))
    throw NotHurwitz("clbr: closed loop F_l(F_hat, Sigma) is unstable", mre);
  GramianPair g = gramians(cl);
  const Eigen::Index nF = fhat.fhat.n(), nS = S.n();
  Matrix Ps = g.P.block(nF, nF, nS, nS);
  Matrix Qs = g.Q.block(nF, nF, nS, nS);
  BalancingResult bal = balance_with_gramians(S, Ps, Qs);
  StateSpace Sr = reduce(bal, r, style, allow_tie_split);
  ReductionReport rep{Method::aCLBR, r, bal.hsv, timer.seconds(), style};
  return {std::move(Sr), std::move(rep)};
}

/// Interconnected-systems balanced reduction: one Gramian pair of the full
/// assembled realization; each subsystem is balanced against its diagonal
/// sub-blocks and reduced. Returns the reduced subsystem models in order.
inline std::pair<std::vector<StateSpace>, ReductionReport> isbr(
    const InterconnectScenario& scn, const std::vector<Eigen::Index>& orders,
    ReduceStyle style, bool allow_tie_split = false) {
  if (orders.size() != scn.components.size())
    throw DimensionMismatch("isbr: one order per subsystem required");
  for (std::size_t j = 0; j < orders.size(); ++j)
    if (!(orders[j] > 0 && orders[j] <= scn.components[j].n()))
      throw BadOrder("isbr: order out of range for subsystem " + std::to_string(j));

  detail::WallTimer timer;
  StateSpace full = assemble(scn);
  const double mre = max_real_eig(full.A);
  if (!(mre < 0.0)) throw NotHurwitz("isbr: interconnected model is unstable", mre);
  GramianPair g = gramians(full);

  std::vector<StateSpace> reduced;
  std::vector<double> pooled;
  for (std::size_t j = 0; j < scn.components.size(); ++j) {
    const Eigen::Index off = scn.state_offset(static_cast<Eigen::Index>(j));
    const Eigen::Index nj = scn.components[j].n();
    Matrix Ps = g.P.block(off, off, nj, nj);
    Matrix Qs = g.Q.block(off, off, nj, nj);
    BalancingResult bal = balance_with_gramians(scn.components[j], Ps, Qs);
    reduced.push_back(reduce(bal, orders[j], style, allow_tie_split));
    pooled.insert(pooled.end(), bal.hsv.begin(), bal.hsv.end());
  }
  std::sort(pooled.rbegin(), pooled.rend());
  Eigen::Index rtot = 0;
  for (Eigen::Index r : orders) rtot += r;
  ReductionReport rep{Method::ISBR, rtot, std::move(pooled), timer.seconds(), style};
  return {std::move(reduced), std::move(rep)};
}

/// Open-loop abstraction of the environment: balanced truncation or
/// residualization of E with all partition channels treated as plain I/O.
inline std::pair<PartitionedSystem, ReductionReport> abstract_env(const PartitionedSystem& E,
                                                                  Eigen::Index r_E,
                                                                  ReduceStyle style,
                                                                  bool allow_tie_split = false) {
  if (!(r_E > 0 && r_E <= E.n()))
    throw BadOrder("abstract_env: need 0 < r_E <= n_E, got r_E = " + std::to_string(r_E));
  detail::WallTimer timer;
  BalancingResult bal = balance(E.sys);
  StateSpace Er = reduce(bal, r_E, style, allow_tie_split);
  ReductionReport rep{Method::env_abstraction, r_E, bal.hsv, timer.seconds(), style};
  return {PartitionedSystem(std::move(Er), E.m1, E.m2, E.p1, E.p2), std::move(rep)};
}

}  // namespace absred
