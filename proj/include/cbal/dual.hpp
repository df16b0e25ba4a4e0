#pragma once
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "cbal/config.hpp"
#include "cbal/consensus.hpp"
#include "cbal/partition.hpp"
#include "cbal/state.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Bounded dual descent, the curvature certificate U of the quadratic
// rows, the one-step-delayed L1 weight, the proximal parameter schedules,
// and state initialization.
// =======================================================================

struct DualStepResult {
  Vec mu;         // updated dual, always inside [0, upper]
  Vec alpha_eff;  // per coordinate: alpha if the candidate was accepted,
                  // 0 if it was rejected at a bound
};

// Componentwise candidate mu_j - alpha r_j, accepted only when it stays
// inside [0, upper_j]; rejected coordinates keep their value and record a
// zero effective step.
inline DualStepResult dual_step(const Vec& mu_k, const Vec& residual,
                                double alpha, const Vec& upper) {
  if (!(alpha > 0)) throw SolverError("dual step: alpha must be positive");
  DualStepResult out;
  out.mu.resize(mu_k.size());
  out.alpha_eff.resize(mu_k.size());
  for (int j = 0; j < mu_k.size(); ++j) {
    const double cand = mu_k[j] - alpha * residual[j];
    if (cand >= 0.0 && cand <= upper[j]) {
      out.mu[j] = cand;
      out.alpha_eff[j] = alpha;
    } else {
      out.mu[j] = mu_k[j];
      out.alpha_eff[j] = 0.0;
    }
  }
  return out;
}

// Sum of accepted alpha r^2 over a step; one addend of the certified
// decrease D. The definition form sum <mu_k - mu_k1, r> evaluates to the
// same number and is used by the certificate assembly.
inline double dual_decrease_term(const DualStepResult& step,
                                 const Vec& residual) {
  double d = 0.0;
  for (int j = 0; j < residual.size(); ++j)
    d += step.alpha_eff[j] * residual[j] * residual[j];
  return d;
}

// Second-order contribution of the quadratic rows to the (i,l) update,
// evaluated as an exact quadratic form: sum over owned rows of
//   (Fmu_j + rho (F_new_j + FY_j)) * (1/2) dx' Hess_j dx
// with dx the subvector displacement (new minus old; the form is
// sign-symmetric) supported on [lo, lo+dx.size()).
inline double compute_U(const BlockView& bv, int lo, const Vec& dx,
                        const Vec& Fmu, const Vec& FY, double rho,
                        const Vec& F_new) {
  double U = 0.0;
  for (int j = 0; j < bv.nF(); ++j) {
    const double w = Fmu[j] + rho * (F_new[j] + FY[j]);
    U += w * bv.Frow(j).half_quadratic_form(dx, lo);
  }
  return U;
}

// Difference form of the same quantity: the left vector paired with
// F_mid - F_new + grad_new . dx, where F_mid holds the row values before
// the subvector moved and grads_new_seg the gradient rows at the new
// composite restricted to the subvector. Exact for quadratic rows; used
// to cross-check compute_U.
inline double compute_U_difference(const Vec& Fmu, const Vec& FY, double rho,
                                   const Vec& F_new, const Vec& F_mid,
                                   const Mat& grads_new_seg, const Vec& dx) {
  double U = 0.0;
  for (int j = 0; j < F_new.size(); ++j) {
    const double w = Fmu[j] + rho * (F_new[j] + FY[j]);
    U += w * (F_mid[j] - F_new[j] + grads_new_seg.row(j).dot(dx));
  }
  return U;
}

// Block curvature constant: sum over owned quadratic rows of the
// box-weighted Hessian row-sum bound. Dominates |U| per unit of L1
// displacement once multiplied by the active penalty magnitude.
inline double block_curvature_constant(const BlockView& bv, const Vec& u) {
  double g = 0.0;
  for (int j = 0; j < bv.nF(); ++j) g += bv.Frow(j).hess_bound_row_sum(u);
  return g;
}

// The bound |U| <= fgamma (|Fmu|_inf + rho |F_new + FY|_inf) |dx|_1,
// checked on every iteration by the engine.
inline bool curvature_bound_holds(double U, double fgamma, const Vec& Fmu,
                                  const Vec& FY, const Vec& F_new, double rho,
                                  double dx_l1, double slack = 1e-9) {
  const double mag = linf(Fmu) + rho * linf(F_new + FY);
  return std::abs(U) <= fgamma * mag * dx_l1 + slack;
}

// One-step-delayed L1 weight: zero when the previous curvature term was
// favorable, otherwise just large enough that the L1 term dominates it.
// A zero displacement with negative U cannot occur (U is quadratic in the
// displacement); the zero return is defensive.
inline double sigma1_schedule(double U_prev, double dx_prev_l1,
                              double Gamma) {
  if (U_prev >= 0.0) return 0.0;
  if (dx_prev_l1 <= 0.0) return 0.0;
  return Gamma * std::abs(U_prev) / dx_prev_l1;
}

// Proximal parameter recurrences. Each output is
//   min( margin * max(floor, (prev + pull)^2 * step_norm_sq), cap )
// where the floor and pull follow the parameter's own estimate.
inline double next_sigma2(double prev, double rho, double margin, double cap,
                          double dx_sq) {
  const double est =
      margin * std::max(4.0 * rho * rho, (prev + 2.0 * rho) * (prev + 2.0 * rho) * dx_sq);
  return std::min(est, cap);
}

inline double next_gamma(double prev, double rho, double margin, double cap,
                         double dy_sq) {
  const double est =
      margin * std::max(rho * rho, (prev + rho) * (prev + rho) * dy_sq);
  return std::min(est, cap);
}

// The tau estimate aggregates all blocks: the floor takes the worst block
// and the growth term uses the N-averaged total pull of the Z update.
inline double next_tau(double prev, const std::vector<double>& rho,
                       double margin, double cap, double dz_sq) {
  double floor_term = 0.0, pull = 0.0;
  for (double r : rho) {
    floor_term = std::max(floor_term, 4.0 * r * r);
    pull += prev + 2.0 * r;
  }
  const double n = static_cast<double>(rho.size());
  const double est = margin * std::max(floor_term, pull * pull / n * dz_sq);
  return std::min(est, cap);
}

struct ScheduleState {
  std::vector<std::vector<double>> sigma1;  // [block][subvector]
  std::vector<std::vector<double>> sigma2;  // [block][subvector]
  std::vector<std::vector<double>> U_prev;  // [block][subvector]
  std::vector<std::array<double, FAM_COUNT>> gamma;  // [block][family]
  double tau = 0.0;
};

inline ScheduleState make_schedule_state(int N, int M,
                                         const SolverConfig& c) {
  ScheduleState s;
  s.sigma1.assign(N, std::vector<double>(M, 0.0));
  s.sigma2.assign(N, std::vector<double>(M, c.sigma2_0));
  s.U_prev.assign(N, std::vector<double>(M, 0.0));
  std::array<double, FAM_COUNT> g;
  g.fill(c.gamma0);
  s.gamma.assign(N, g);
  s.tau = c.tau0;
  return s;
}

// Closed form of the initial merit value: with mu0 = lambda_fam r0 every
// family contributes (lambda_fam + rho/2) |r0|^2 on top of the cost term.
// The generic merit evaluator in the diagnostics module must agree with
// this to high relative accuracy on the initial state.
inline double initial_lagrangian(const Problem& p,
                                 const std::vector<BlockView>& views,
                                 const GlobalState& s,
                                 const SolverConfig& c) {
  double L = 0.0;
  for (size_t i = 0; i < views.size(); ++i) {
    L += p.f.dot(s.X[i]);
    const FamilyVecs r0 = residuals(views[i], s.X[i], s.Z, s.Y[i]);
    for (int fam = 0; fam < FAM_COUNT; ++fam)
      L += (c.lambda[fam] + 0.5 * c.rho) * r0[fam].squaredNorm();
  }
  return L;
}

// Interior start and matched duals:
//   Z0 = lambda_z sign(f) u elementwise (sign(0) taken as +1), X0 = Z0,
//   every slack at its upper bound, and mu0 = lambda_fam r0 so the first
//   dual steps begin from a consistently scaled point. Dual caps default
//   to max(dual_upper_mult mu0, 1) elementwise; an explicit per-family
//   cap must already contain mu0.
inline std::pair<GlobalState, ScheduleState> init_state(
    const Problem& p, const ConsensusPartition& part,
    const std::vector<BlockView>& views, const SlackBounds& bounds,
    const SolverConfig& c) {
  GlobalState s;
  s.Z.resize(p.n);
  for (int j = 0; j < p.n; ++j) {
    const double sign = p.f[j] < 0.0 ? -1.0 : 1.0;
    s.Z[j] = c.lambda_z * sign * p.u[j];
  }
  s.X.assign(part.N, s.Z);
  s.Y.resize(part.N);
  s.mu.resize(part.N);
  s.mu_upper.resize(part.N);
  for (int i = 0; i < part.N; ++i) {
    for (int fam = 0; fam < FAM_COUNT; ++fam)
      s.Y[i][fam] = bounds.of(i, static_cast<Family>(fam));
    const FamilyVecs r0 = residuals(views[i], s.X[i], s.Z, s.Y[i]);
    for (int fam = 0; fam < FAM_COUNT; ++fam) {
      s.mu[i][fam] = c.lambda[fam] * r0[fam];
      Vec& cap = s.mu_upper[i][fam];
      const Vec& mu0 = s.mu[i][fam];
      cap.resize(mu0.size());
      if (std::isnan(c.dual_upper[fam])) {
        for (int j = 0; j < mu0.size(); ++j)
          cap[j] = std::max(c.dual_upper_mult * mu0[j], 1.0);
      } else {
        cap.setConstant(c.dual_upper[fam]);
        for (int j = 0; j < mu0.size(); ++j)
          if (mu0[j] > cap[j])
            throw SolverError(
                std::string("init: initial dual for family ") +
                kFamilyNames[fam] + " exceeds dual_upper_" +
                kFamilyNames[fam] +
                "; raise the bound above the lambda-scaled initial residual");
      }
    }
  }
  s.k = 0;
  // The cost term per block is at least -|f|.u and every penalty term is
  // nonnegative, so this floor cannot trip; it guards the arithmetic.
  const double L0 = initial_lagrangian(p, views, s, c);
  if (L0 < -static_cast<double>(part.N) * p.f.cwiseAbs().dot(p.u) - 1e-9)
    throw SolverError("init: initial merit value below the objective floor");
  return {std::move(s), make_schedule_state(part.N, part.M, c)};
}

}  // namespace cbal
