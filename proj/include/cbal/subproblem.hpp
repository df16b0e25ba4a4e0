#pragma once
#include <cmath>
#include <utility>

#include "cbal/partition.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// The (i,l) primal update: minimize over one subvector, inside the box,
// the block's augmented Lagrangian slice plus a double proximal term
// (L1 plus squared L2, both anchored at the previous subvector value).
// Constraint rows are evaluated at the composite point that mixes already
// updated subvectors with not yet updated ones, so the context carries a
// full-length evaluation buffer whose slot [lo, hi) is scratch.
// =======================================================================

struct SubblockContext {
  const BlockView* bv = nullptr;
  int lo = 0, hi = 0;  // coordinate range of the subvector
  Vec point;           // composite buffer, full length; slot is scratch
  Vec xk;              // anchor: subvector value at iteration start
  Vec z_l, f_l, u_l;   // consensus target, cost and box slices
  Vec pxy_l, nxy_l;    // consensus slack slices
  Vec pxmu_l, nxmu_l;  // consensus dual slices
  const FamilyVecs* Y = nullptr;   // block slacks (constraint families)
  const FamilyVecs* mu = nullptr;  // block duals (constraint families)
  double rho = 1.0, sigma1 = 0.0, sigma2 = 1.0;

  int m() const { return hi - lo; }
};

// The composite argument must hold the first subvectors at their new
// values and the rest (including slot l) at the iteration-start values.
inline SubblockContext make_subblock_context(
    const BlockView& bv, int lo, int hi, const Vec& composite, const Vec& Z,
    const FamilyVecs& Y, const FamilyVecs& mu, double rho, double sigma1,
    double sigma2) {
  SubblockContext ctx;
  ctx.bv = &bv;
  ctx.lo = lo;
  ctx.hi = hi;
  const int m = hi - lo;
  ctx.point = composite;
  ctx.xk = composite.segment(lo, m);
  ctx.z_l = Z.segment(lo, m);
  ctx.f_l = bv.problem->f.segment(lo, m);
  ctx.u_l = bv.problem->u.segment(lo, m);
  ctx.pxy_l = Y[FAM_PX].segment(lo, m);
  ctx.nxy_l = Y[FAM_NX].segment(lo, m);
  ctx.pxmu_l = mu[FAM_PX].segment(lo, m);
  ctx.nxmu_l = mu[FAM_NX].segment(lo, m);
  ctx.Y = &Y;
  ctx.mu = &mu;
  ctx.rho = rho;
  ctx.sigma1 = sigma1;
  ctx.sigma2 = sigma2;
  return ctx;
}

// Smooth part of the minimand at subvector candidate x: cost slice,
// penalized consensus and constraint residuals, and the squared proximal
// term. The L1 term is excluded (it is handled by the prox operator).
inline double smooth_value(SubblockContext& ctx, const Vec& x) {
  const BlockView& bv = *ctx.bv;
  const double rho = ctx.rho;
  ctx.point.segment(ctx.lo, ctx.m()) = x;
  double val = ctx.f_l.dot(x);
  const Vec rpx = x - ctx.z_l + ctx.pxy_l;
  const Vec rnx = ctx.z_l - x + ctx.nxy_l;
  val += ctx.pxmu_l.dot(rpx) + 0.5 * rho * rpx.squaredNorm();
  val += ctx.nxmu_l.dot(rnx) + 0.5 * rho * rnx.squaredNorm();
  for (int j = 0; j < bv.nF(); ++j) {
    const double v = bv.Frow(j).value(ctx.point) + (*ctx.Y)[FAM_F][j];
    val += (*ctx.mu)[FAM_F][j] * v + 0.5 * rho * v * v;
  }
  for (int j = 0; j < bv.nG(); ++j) {
    const double v = bv.Grow(j).value(ctx.point) + (*ctx.Y)[FAM_G][j];
    val += (*ctx.mu)[FAM_G][j] * v + 0.5 * rho * v * v;
  }
  for (int j = 0; j < bv.nH(); ++j) {
    const double hv = bv.Hrow(j).value(ctx.point);
    const double vp = hv + (*ctx.Y)[FAM_PH][j];
    const double vn = -hv + (*ctx.Y)[FAM_NH][j];
    val += (*ctx.mu)[FAM_PH][j] * vp + 0.5 * rho * vp * vp;
    val += (*ctx.mu)[FAM_NH][j] * vn + 0.5 * rho * vn * vn;
  }
  val += 0.5 * ctx.sigma2 * (x - ctx.xk).squaredNorm();
  return val;
}

// Full minimand (box indicator excluded; callers keep x inside the box).
inline double subblock_objective(SubblockContext& ctx, const Vec& x) {
  if (static_cast<int>(x.size()) != ctx.m())
    throw SolverError("subproblem: candidate length mismatch");
  return smooth_value(ctx, x) +
         ctx.sigma1 * (x - ctx.xk).cwiseAbs().sum();
}

// Gradient of smooth_value with respect to the subvector.
inline Vec smooth_gradient(SubblockContext& ctx, const Vec& x) {
  const BlockView& bv = *ctx.bv;
  const double rho = ctx.rho;
  ctx.point.segment(ctx.lo, ctx.m()) = x;
  Vec g = ctx.f_l + ctx.pxmu_l - ctx.nxmu_l +
          rho * (2.0 * (x - ctx.z_l) + ctx.pxy_l - ctx.nxy_l) +
          ctx.sigma2 * (x - ctx.xk);
  for (int j = 0; j < bv.nF(); ++j) {
    const QuadraticConstraint& q = bv.Frow(j);
    const double w =
        (*ctx.mu)[FAM_F][j] + rho * (q.value(ctx.point) + (*ctx.Y)[FAM_F][j]);
    g += w * q.gradient(ctx.point).segment(ctx.lo, ctx.m());
  }
  for (int j = 0; j < bv.nG(); ++j) {
    const AffineForm& row = bv.Grow(j);
    const double w = (*ctx.mu)[FAM_G][j] +
                     rho * (row.value(ctx.point) + (*ctx.Y)[FAM_G][j]);
    g += w * row.weights.segment(ctx.lo, ctx.m());
  }
  for (int j = 0; j < bv.nH(); ++j) {
    const AffineForm& row = bv.Hrow(j);
    const double hv = row.value(ctx.point);
    const double w =
        (*ctx.mu)[FAM_PH][j] - (*ctx.mu)[FAM_NH][j] +
        rho * (2.0 * hv + (*ctx.Y)[FAM_PH][j] - (*ctx.Y)[FAM_NH][j]);
    g += w * row.weights.segment(ctx.lo, ctx.m());
  }
  return g;
}

// Exact prox of weight*|x - center|_1 plus the box indicator, evaluated
// coordinatewise: soft-threshold toward the center, then clamp. Clamping
// the 1-D prox onto an interval is the prox of the sum, so this is exact.
inline Vec prox_l1_box(const Vec& v, const Vec& center, double weight,
                       const Vec& halfwidth) {
  if (weight < 0) throw SolverError("prox weight must be nonnegative");
  Vec out(v.size());
  for (int j = 0; j < v.size(); ++j) {
    const double d = v[j] - center[j];
    const double soft =
        d > weight ? d - weight : (d < -weight ? d + weight : 0.0);
    out[j] = std::min(std::max(center[j] + soft, -halfwidth[j]),
                      halfwidth[j]);
  }
  return out;
}

// Power-iteration estimate of the curvature of the smooth part at the
// anchor. The Hessian is the frozen quadratic part (consensus plus
// proximal diagonal, affine penalty rank-one terms) plus the current
// quartic curvature of the quadratic rows; its action on a direction is
// assembled without forming the matrix. Penalized quadratic residuals can
// make the full operator indefinite, so the estimate targets the dominant
// absolute eigenvalue, which is what the line search needs.
inline double curvature_estimate(SubblockContext& ctx, int iters = 25) {
  const BlockView& bv = *ctx.bv;
  const int m = ctx.m();
  const double rho = ctx.rho;
  const double diag = 2.0 * rho + ctx.sigma2;
  ctx.point.segment(ctx.lo, m) = ctx.xk;

  // Frozen per-row data at the anchor composite point.
  std::vector<double> wF(bv.nF());
  std::vector<Vec> gF(bv.nF()), gG(bv.nG()), gH(bv.nH());
  for (int j = 0; j < bv.nF(); ++j) {
    const QuadraticConstraint& q = bv.Frow(j);
    wF[j] =
        (*ctx.mu)[FAM_F][j] + rho * (q.value(ctx.point) + (*ctx.Y)[FAM_F][j]);
    gF[j] = q.gradient(ctx.point).segment(ctx.lo, m);
  }
  for (int j = 0; j < bv.nG(); ++j)
    gG[j] = bv.Grow(j).weights.segment(ctx.lo, m);
  for (int j = 0; j < bv.nH(); ++j)
    gH[j] = bv.Hrow(j).weights.segment(ctx.lo, m);

  auto apply = [&](const Vec& v) {
    Vec out = diag * v;
    for (int j = 0; j < bv.nF(); ++j) {
      out += wF[j] * bv.Frow(j).hessian_vec(v, ctx.lo);
      out += rho * gF[j].dot(v) * gF[j];
    }
    for (int j = 0; j < bv.nG(); ++j) out += rho * gG[j].dot(v) * gG[j];
    for (int j = 0; j < bv.nH(); ++j)
      out += 2.0 * rho * gH[j].dot(v) * gH[j];
    return out;
  };

  Vec v(m);
  for (int j = 0; j < m; ++j) v[j] = 1.0 / (1.0 + j);
  v /= v.norm();
  double est = diag;
  for (int it = 0; it < iters; ++it) {
    Vec hv = apply(v);
    const double norm = hv.norm();
    if (norm <= diag * 1e-14) break;
    est = norm;
    v = hv / norm;
  }
  return std::max(est, diag);
}

struct SubblockResult {
  Vec x;
  int iterations = 0;
  double fixed_point_residual = 0.0;
  bool hit_cap = false;
};

// Proximal gradient with a backtracking line search. Starts at the anchor
// (so descent relative to it is monotone by construction) and stops when a
// full accepted step moves less than tol*(1+|anchor|), which certifies the
// fixed-point residual of the returned point; that verifying displacement
// is reported. The step halves on rejection, grows again after accepted
// steps (the anchor curvature estimate is local, so the admissible step
// elsewhere can be larger), and stays within a fixed window around the
// estimate so the iteration remains deterministic.
inline SubblockResult solve_subblock(SubblockContext& ctx, double tol,
                                     int cap) {
  const double tol_eff = tol * (1.0 + ctx.xk.norm());
  const double t_max = 8.0 / curvature_estimate(ctx);
  double t = 0.125 * t_max;
  Vec x = ctx.xk;
  double disp = 0.0;
  for (int iter = 1; iter <= cap; ++iter) {
    const double fx = smooth_value(ctx, x);
    if (!std::isfinite(fx))
      throw SolverError("subproblem: objective became non-finite");
    const Vec gx = smooth_gradient(ctx, x);
    Vec cand;
    while (true) {
      cand = prox_l1_box(x - t * gx, ctx.xk, t * ctx.sigma1, ctx.u_l);
      const Vec dx = cand - x;
      const double bound =
          fx + gx.dot(dx) + dx.squaredNorm() / (2.0 * t) + 1e-15;
      if (smooth_value(ctx, cand) <= bound) break;
      t *= 0.5;
      if (t < 1e-18)
        throw SolverError("subproblem: line search stalled");
    }
    disp = (cand - x).norm();
    if (disp <= tol_eff)
      // Return the post-prox point: it carries the same fixed-point
      // residual, and its active coordinates sit exactly on the box and
      // anchor kinks, which removes the first-order value error an
      // almost-clamped point would leak into the descent certificate.
      return {cand, iter, disp, false};
    x = cand;
    t = std::min(1.5 * t, t_max);
  }
  return {x, cap, disp, true};
}

// The two explicit schedule-estimation points. The first freezes the whole
// gradient at the anchor and takes one diagonal-preconditioned step; the
// second re-evaluates the constraint terms at that first point while
// keeping the consensus pull anchored. Neither is clamped and neither is
// ever used as the primal update; the L1 subgradient contribution is taken
// as zero since only magnitudes feed the schedules.
inline std::pair<Vec, Vec> second_order_step(SubblockContext& ctx) {
  const double denom = ctx.sigma2 + 2.0 * ctx.rho;
  if (!(denom > 0))
    throw SolverError("subproblem: sigma2 + 2 rho must be positive");
  const Vec g1 = smooth_gradient(ctx, ctx.xk);
  const Vec x1 = ctx.xk - g1 / denom;
  const Vec g2 = smooth_gradient(ctx, x1) - denom * (x1 - ctx.xk);
  const Vec x2 = ctx.xk - g2 / denom;
  return {x1, x2};
}

}  // namespace cbal
