#pragma once
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cbal/partition.hpp"
#include "cbal/state.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Read-only instrumentation: the merit (augmented Lagrangian) sequence,
// the per-iteration descent certificate, KKT surrogate residuals, and the
// empirical convergence-rate estimate.
// =======================================================================

// Merit value of a state: per block, cost plus dual-paired extended
// residuals plus quadratic penalties.
inline double lagrangian_value(const Problem& p,
                               const std::vector<BlockView>& views,
                               const std::vector<Vec>& X, const Vec& Z,
                               const std::vector<FamilyVecs>& Y,
                               const std::vector<FamilyVecs>& mu,
                               const std::vector<double>& rho) {
  double L = 0.0;
  for (size_t i = 0; i < views.size(); ++i) {
    L += p.f.dot(X[i]);
    const FamilyVecs r = residuals(views[i], X[i], Z, Y[i]);
    for (int fam = 0; fam < FAM_COUNT; ++fam)
      L += mu[i][fam].dot(r[fam]) + 0.5 * rho[i] * r[fam].squaredNorm();
  }
  return L;
}

// The same value split into its three independent groups, so tests can
// verify the decomposition against the single-pass total.
struct LagrangianParts {
  double cost = 0.0;
  double dual_pairings = 0.0;
  double penalties = 0.0;

  double total() const { return cost + dual_pairings + penalties; }
};

inline LagrangianParts lagrangian_parts(const Problem& p,
                                        const std::vector<BlockView>& views,
                                        const std::vector<Vec>& X,
                                        const Vec& Z,
                                        const std::vector<FamilyVecs>& Y,
                                        const std::vector<FamilyVecs>& mu,
                                        const std::vector<double>& rho) {
  LagrangianParts parts;
  for (size_t i = 0; i < views.size(); ++i) {
    parts.cost += p.f.dot(X[i]);
    const FamilyVecs r = residuals(views[i], X[i], Z, Y[i]);
    for (int fam = 0; fam < FAM_COUNT; ++fam) {
      parts.dual_pairings += mu[i][fam].dot(r[fam]);
      parts.penalties += 0.5 * rho[i] * r[fam].squaredNorm();
    }
  }
  return parts;
}

// Everything one iteration must record for the certificate to be
// assembled afterwards. Per-subvector vectors are indexed by l.
struct BlockTransition {
  Vec Xk, Xk1;                      // block copy before and after
  FamilyVecs Yk, Yk1, muk, muk1;    // slacks and duals before and after
  FamilyVecs r_new;                 // extended residuals at the new point
  std::vector<Vec> F_mid, F_new;    // quadratic row values around each
                                    // subvector's move
  std::vector<double> sigma1, sigma2;  // proximal weights used this step
  std::vector<double> U;               // curvature certificate per l
};

struct TransitionData {
  Vec Zk, Zk1;
  double tau = 0.0;  // value used this iteration
  std::vector<std::array<double, FAM_COUNT>> gamma;  // used this iteration
  std::vector<BlockTransition> blocks;
  double L_k = 0.0, L_k1 = 0.0;
};

struct CertificateRecord {
  double L_k = 0.0, L_k1 = 0.0;
  double D_k = 0.0;            // dual decrease, definition form
  double P_k = 0.0;            // nonnegative quadratic terms
  double sigma1_l1_sum = 0.0;  // L1 weights times subvector moves
  double U_sum = 0.0;          // curvature corrections
  double J_k = 0.0;            // D + P + sigma1 sum + U
  // Certified-descent gap: how far the merit drop falls short of J.
  // Nonnegative up to inner-solve accuracy when the updates are exact.
  double descent_gap = 0.0;
};

// Assembles the certificate from one recorded transition. D pairs the
// dual motion with the new residuals; P collects the squared-displacement
// terms, including the constraint cross terms per subvector move.
inline CertificateRecord certificate(const std::vector<BlockView>& views,
                                     const ConsensusPartition& part,
                                     const TransitionData& td,
                                     const std::vector<double>& rho) {
  if (td.blocks.size() != static_cast<size_t>(part.N))
    throw SolverError("certificate: missing block transitions");
  CertificateRecord rec;
  rec.L_k = td.L_k;
  rec.L_k1 = td.L_k1;
  const Vec dZ = td.Zk1 - td.Zk;
  const double dZ_sq = dZ.squaredNorm();
  for (int i = 0; i < part.N; ++i) {
    const BlockTransition& bt = td.blocks[i];
    if (static_cast<int>(bt.F_mid.size()) != part.M ||
        static_cast<int>(bt.U.size()) != part.M)
      throw SolverError("certificate: missing per-subvector records");
    const BlockView& bv = views[i];
    for (int fam = 0; fam < FAM_COUNT; ++fam) {
      rec.D_k += (bt.muk[fam] - bt.muk1[fam]).dot(bt.r_new[fam]);
      rec.P_k += (td.gamma[i][fam] + 0.5 * rho[i]) *
                 (bt.Yk1[fam] - bt.Yk[fam]).squaredNorm();
    }
    rec.P_k += rho[i] * (bt.Xk1 - bt.Xk).squaredNorm();
    rec.P_k += (td.tau + rho[i]) * dZ_sq;
    for (int l = 0; l < part.M; ++l) {
      const int lo = part.range_lo[l], m = part.subvector_size(l);
      const Vec dx = bt.Xk1.segment(lo, m) - bt.Xk.segment(lo, m);
      rec.P_k += bt.sigma2[l] * dx.squaredNorm();
      rec.P_k += 0.5 * rho[i] * (bt.F_new[l] - bt.F_mid[l]).squaredNorm();
      for (int j = 0; j < bv.nG(); ++j) {
        const double gd = bv.Grow(j).weights.segment(lo, m).dot(dx);
        rec.P_k += 0.5 * rho[i] * gd * gd;
      }
      for (int j = 0; j < bv.nH(); ++j) {
        const double hd = bv.Hrow(j).weights.segment(lo, m).dot(dx);
        rec.P_k += rho[i] * hd * hd;
      }
      rec.sigma1_l1_sum += bt.sigma1[l] * dx.cwiseAbs().sum();
      rec.U_sum += bt.U[l];
    }
  }
  rec.J_k = rec.D_k + rec.P_k + rec.sigma1_l1_sum + rec.U_sum;
  rec.descent_gap = rec.L_k - rec.L_k1 - rec.J_k;
  return rec;
}

// KKT surrogate residuals at a consensus point. Stationarity is the
// projected-gradient residual of each block's own multiplier-weighted
// gradient; complementarity pairs each block's duals with its own rows
// evaluated at Z.
struct KktReport {
  double consensus_gap = 0.0;   // max_i |X_i - Z|_inf
  double feas_F = 0.0;          // max positive part of F at Z
  double feas_G = 0.0;          // max positive part of G at Z
  double feas_H = 0.0;          // max |H| at Z
  double comp_F = 0.0;          // |sum_i <Fmu_i, F_i(Z)>|
  double comp_G = 0.0;
  double stationarity = 0.0;    // max_i |P_box(X_i - g_i) - X_i|_inf

  double max_feasibility() const {
    return std::max({feas_F, feas_G, feas_H});
  }
};

inline KktReport kkt_residual(const Problem& p,
                              const std::vector<BlockView>& views,
                              const std::vector<Vec>& X, const Vec& Z,
                              const std::vector<FamilyVecs>& mu) {
  KktReport rep;
  double comp_F = 0.0, comp_G = 0.0;
  for (size_t i = 0; i < views.size(); ++i) {
    const BlockView& bv = views[i];
    rep.consensus_gap = std::max(rep.consensus_gap, linf(X[i] - Z));
    const Vec Fz = bv.F_values(Z), Gz = bv.G_values(Z), Hz = bv.H_values(Z);
    for (int j = 0; j < Fz.size(); ++j)
      rep.feas_F = std::max(rep.feas_F, Fz[j]);
    for (int j = 0; j < Gz.size(); ++j)
      rep.feas_G = std::max(rep.feas_G, Gz[j]);
    rep.feas_H = std::max(rep.feas_H, linf(Hz));
    comp_F += mu[i][FAM_F].dot(Fz);
    comp_G += mu[i][FAM_G].dot(Gz);

    Vec g = p.f + mu[i][FAM_PX] - mu[i][FAM_NX];
    for (int j = 0; j < bv.nF(); ++j)
      g += mu[i][FAM_F][j] * bv.Frow(j).gradient(X[i]);
    for (int j = 0; j < bv.nG(); ++j)
      g += mu[i][FAM_G][j] * bv.Grow(j).weights;
    for (int j = 0; j < bv.nH(); ++j)
      g += (mu[i][FAM_PH][j] - mu[i][FAM_NH][j]) * bv.Hrow(j).weights;
    rep.stationarity =
        std::max(rep.stationarity, linf(clamp_box(X[i] - g, p.u) - X[i]));
  }
  rep.feas_F = std::max(rep.feas_F, 0.0);
  rep.feas_G = std::max(rep.feas_G, 0.0);
  rep.comp_F = std::abs(comp_F);
  rep.comp_G = std::abs(comp_G);
  return rep;
}

// Least-squares slope of log(r) vs log(k) over indices [lo, hi), with
// k = index + 1. Nonpositive residuals are excluded (converged runs hit
// exact zeros); fewer than min_points survivors yields the fallback.
inline double loglog_slope(const std::vector<double>& r, size_t lo,
                           size_t hi, size_t min_points, double fallback) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  size_t cnt = 0;
  for (size_t idx = lo; idx < hi && idx < r.size(); ++idx) {
    if (!(r[idx] > 0.0)) continue;
    const double x = std::log(static_cast<double>(idx + 1));
    const double y = std::log(r[idx]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  if (cnt < min_points) return fallback;
  const double denom = cnt * sxx - sx * sx;
  if (denom <= 0.0) return fallback;
  return (cnt * sxy - sx * sy) / denom;
}

// Running estimate used for the trace column: slope over the tail half of
// the history so far, defined once 20 iterations have accumulated.
inline double slope_so_far(const std::vector<double>& r) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (r.size() < 20) return nan;
  return loglog_slope(r, r.size() / 2, r.size(), 2, nan);
}

inline double median_k_r2(const std::vector<double>& r, size_t lo,
                          size_t hi) {
  std::vector<double> vals;
  for (size_t idx = lo; idx < hi && idx < r.size(); ++idx)
    vals.push_back(static_cast<double>(idx + 1) * r[idx] * r[idx]);
  if (vals.empty()) throw SolverError("rate estimate: empty window");
  std::sort(vals.begin(), vals.end());
  const size_t mid = vals.size() / 2;
  return vals.size() % 2 ? vals[mid] : 0.5 * (vals[mid - 1] + vals[mid]);
}

struct RateEstimate {
  double slope = 0.0;
  double median_kr2 = 0.0;
  size_t window_lo = 0, window_hi = 0;
};

// Tail-window rate statistics over a residual history (r[idx] is the
// residual after iteration idx + 1). The window is the trailing fraction
// of the history. Needs at least 50 iterations to be meaningful; a slope
// over fewer than 8 positive points is reported as -infinity (the
// residual hit zero, which is faster than any power law).
inline RateEstimate rate_estimate(const std::vector<double>& r,
                                  double window) {
  if (r.size() < 50)
    throw SolverError("rate estimate: needs at least 50 iterations");
  if (!(window > 0.0 && window <= 1.0))
    throw SolverError("rate estimate: window fraction must be in (0, 1]");
  const size_t len = std::max<size_t>(
      1, static_cast<size_t>(std::llround(window * r.size())));
  RateEstimate est;
  est.window_lo = r.size() - len;
  est.window_hi = r.size();
  est.slope = loglog_slope(r, est.window_lo, est.window_hi, 8,
                           -std::numeric_limits<double>::infinity());
  est.median_kr2 = median_k_r2(r, est.window_lo, est.window_hi);
  return est;
}

}  // namespace cbal
