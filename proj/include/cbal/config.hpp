#pragma once
#include <cmath>
#include <limits>
#include <string>

#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Solver configuration. Fields default to NaN where the resolved value is
// derived from rho and margin; finalize() fills them in. All values apply
// uniformly across blocks (the engine re-derives per-block quantities when
// a per-block rho vector is supplied at the API level).
// =======================================================================

inline constexpr double kUnsetD = std::numeric_limits<double>::quiet_NaN();

enum class ExecMode { Sequential, ParallelBlocks };

// Default fraction of the largest admissible dual step, per family.
// Consensus residuals stay nonzero for the entire approach to consensus,
// so their duals accumulate drift proportional to the whole trajectory; a
// near-frozen step keeps that drift below the convergence tolerance while
// staying strictly positive as required. Constraint-family residuals
// vanish at stationary points, so those duals tolerate a larger step.
inline constexpr double kConsensusStepScale = 1e-8;
inline constexpr double kConstraintStepScale = 5e-3;

struct SolverConfig {
  double rho = 1.0;       // penalty weight per block
  double margin = 4.0;    // headroom factor for schedule floors and steps
  double big_gamma = 1.0; // response gain of the one-step-delayed L1 weight
  double lambda_z = 0.9;  // interior coefficient of the Z start point

  // Dual initialization coefficients per family; resolved to rho
  // (quadratic family: rho/2, which keeps the curvature correction term
  // moderate).
  double lambda[FAM_COUNT] = {kUnsetD, kUnsetD, kUnsetD,
                              kUnsetD, kUnsetD, kUnsetD};
  // Dual step sizes per family; resolved to
  // scale * (lambda + rho/2) / margin, which always satisfies the
  // step-headroom requirement checked by validate_config.
  double alpha[FAM_COUNT] = {kUnsetD, kUnsetD, kUnsetD,
                             kUnsetD, kUnsetD, kUnsetD};
  // Explicit uniform dual upper bound per family; NaN selects the
  // automatic bound max(dual_upper_mult * initial dual, 1) elementwise.
  double dual_upper[FAM_COUNT] = {kUnsetD, kUnsetD, kUnsetD,
                                  kUnsetD, kUnsetD, kUnsetD};
  double dual_upper_mult = 10.0;

  double eps_slack = 0.1;   // slack headroom factor, times target_range
  double cap_scale = 1e8;   // schedule cap = cap_scale * rho^2
  double tau0 = kUnsetD;    // initial Z proximal weight
  double gamma0 = kUnsetD;  // initial slack proximal weight
  double sigma2_0 = kUnsetD;  // initial quadratic proximal weight
  // Curvature constant bounding the second-order correction of the
  // quadratic rows; NaN derives it per block from the constraint data.
  double f_curvature_bound = kUnsetD;

  double target_range = 1.0;  // common row range after scaling
  bool scale = true;          // apply range scaling inside run()

  double tol = 1e-6;       // stopping threshold on the residual norms
  long max_iter = 50000;
  double inner_tol = 1e-8;  // subproblem fixed-point tolerance factor
  int inner_cap = 500;      // subproblem iteration cap
  ExecMode mode = ExecMode::Sequential;

  double schedule_floor() const { return margin * 4.0 * rho * rho; }
  double schedule_cap() const { return cap_scale * rho * rho; }

  // Resolve derived defaults. Safe to call repeatedly.
  void finalize() {
    auto fill = [](double& v, double def) {
      if (std::isnan(v)) v = def;
    };
    fill(lambda[FAM_PX], rho);
    fill(lambda[FAM_NX], rho);
    fill(lambda[FAM_F], 0.5 * rho);
    fill(lambda[FAM_G], rho);
    fill(lambda[FAM_PH], rho);
    fill(lambda[FAM_NH], rho);
    for (int fam = 0; fam < FAM_COUNT; ++fam) {
      const double s = (fam == FAM_PX || fam == FAM_NX)
                           ? kConsensusStepScale
                           : kConstraintStepScale;
      fill(alpha[fam], s * (lambda[fam] + 0.5 * rho) / margin);
    }
    fill(tau0, schedule_floor());
    fill(gamma0, schedule_floor());
    fill(sigma2_0, schedule_floor());
  }
};

// Rejects configurations that cannot run. In particular every dual step
// must leave headroom: lambda + rho/2 >= margin * alpha, the condition
// under which the certified decrease absorbs the dual motion.
inline void validate_config(const SolverConfig& c) {
  auto bad = [](const std::string& msg) { throw SolverError("config: " + msg); };
  if (!(c.rho > 0)) bad("rho must be positive");
  if (!(c.margin > 1)) bad("margin must exceed 1");
  if (!(c.big_gamma >= 1)) bad("big_gamma must be at least 1");
  if (!(c.lambda_z > 0 && c.lambda_z < 1))
    bad("lambda_z must lie strictly inside (0, 1)");
  if (!(c.dual_upper_mult >= 1)) bad("dual_upper_mult must be at least 1");
  if (!(c.eps_slack >= 0)) bad("eps_slack must be nonnegative");
  if (!(c.cap_scale > 0)) bad("cap_scale must be positive");
  if (!(c.target_range > 0)) bad("target_range must be positive");
  if (!(c.tol > 0)) bad("tol must be positive");
  if (c.max_iter < 1) bad("max_iter must be at least 1");
  if (!(c.inner_tol > 0)) bad("inner_tol must be positive");
  if (c.inner_cap < 1) bad("inner_cap must be at least 1");
  for (int fam = 0; fam < FAM_COUNT; ++fam) {
    const std::string name = kFamilyNames[fam];
    if (!(c.lambda[fam] > 0)) bad("lambda_" + name + " must be positive");
    if (!(c.alpha[fam] > 0)) bad("alpha_" + name + " must be positive");
    if (!std::isnan(c.dual_upper[fam]) && !(c.dual_upper[fam] > 0))
      bad("dual_upper_" + name + " must be positive");
    if (c.lambda[fam] + 0.5 * c.rho < c.margin * c.alpha[fam])
      bad("dual step alpha_" + name + "=" + std::to_string(c.alpha[fam]) +
          " too large: lambda_" + name + " + rho/2 must be at least margin" +
          " * alpha_" + name +
          " (reduce the step or increase lambda/margin headroom)");
  }
  if (!(c.tau0 > 0) || !(c.gamma0 > 0) || !(c.sigma2_0 > 0))
    bad("initial proximal weights must be positive");
}

}  // namespace cbal
