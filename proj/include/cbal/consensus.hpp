#pragma once
#include <cstddef>
#include <vector>

#include "cbal/partition.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Consensus-side updates: the ring accumulation that produces the common
// vector Z, a structurally different direct evaluation of the same
// weighted average used as a cross-check, and the closed-form slack
// updates.
// =======================================================================

struct RingResult {
  Vec Z;
  double weight_sum = 0.0;
  // One entry per hand-off between consecutive blocks in the ring. Each
  // hop carries the running weighted sum (n doubles), the running weight
  // (1 double), and a fixed framing overhead.
  std::vector<std::size_t> hop_payload_bytes;
};

inline std::size_t ring_hop_bytes(int n) {
  return sizeof(double) * (static_cast<std::size_t>(n) + 1) + 16;
}

// Sequential ring: visited block i folds in
//   2 rho_i X_i + rho_i (pXY_i - nXY_i) + (pXmu_i - nXmu_i) + tau Z_k
// and the last block divides by the accumulated weight sum(tau + 2 rho_i)
// and projects onto the box. The tau Z_k pull is contributed once per
// block, so tau carries total weight N tau; the direct reference below
// uses identical weights, making ring-vs-direct an exact equivalence.
// An explicit visiting order may be supplied; the result is independent
// of it up to floating-point reassociation.
inline RingResult update_z_ring(const std::vector<Vec>& X_new,
                                const std::vector<FamilyVecs>& Y,
                                const std::vector<FamilyVecs>& mu,
                                const std::vector<double>& rho, double tau,
                                const Vec& Z_k, const Vec& u,
                                const std::vector<int>& order = {}) {
  const int N = static_cast<int>(X_new.size());
  if (N == 0) throw SolverError("z ring: no blocks");
  if (!(tau > 0)) throw SolverError("z ring: tau must be positive");
  const int n = static_cast<int>(Z_k.size());
  RingResult out;
  Vec S = Vec::Zero(n);
  double w = 0.0;
  for (int hop = 0; hop < N; ++hop) {
    const int i = order.empty() ? hop : order[hop];
    S += 2.0 * rho[i] * X_new[i] + rho[i] * (Y[i][FAM_PX] - Y[i][FAM_NX]) +
         (mu[i][FAM_PX] - mu[i][FAM_NX]) + tau * Z_k;
    w += tau + 2.0 * rho[i];
    if (hop + 1 < N) out.hop_payload_bytes.push_back(ring_hop_bytes(n));
  }
  out.Z = clamp_box(S / w, u);
  out.weight_sum = w;
  return out;
}

// Single-pass closed form with the same weights, accumulated by component
// group rather than by block, for cross-checking the ring.
inline Vec direct_z_reference(const std::vector<Vec>& X_new,
                              const std::vector<FamilyVecs>& Y,
                              const std::vector<FamilyVecs>& mu,
                              const std::vector<double>& rho, double tau,
                              const Vec& Z_k, const Vec& u) {
  const int N = static_cast<int>(X_new.size());
  if (N == 0) throw SolverError("z ring: no blocks");
  const int n = static_cast<int>(Z_k.size());
  Vec xsum = Vec::Zero(n), ysum = Vec::Zero(n), msum = Vec::Zero(n);
  double rho_sum = 0.0;
  for (int i = 0; i < N; ++i) {
    xsum += rho[i] * X_new[i];
    ysum += rho[i] * (Y[i][FAM_PX] - Y[i][FAM_NX]);
    msum += mu[i][FAM_PX] - mu[i][FAM_NX];
    rho_sum += rho[i];
  }
  const Vec S = 2.0 * xsum + ysum + msum + (N * tau) * Z_k;
  return clamp_box(S / (N * tau + 2.0 * rho_sum), u);
}

// Slack-free residual of one family at the new primal point: what the
// extended residual would be with the slack at zero.
inline Vec slack_free_residual(const BlockView& bv, Family fam, const Vec& x,
                               const Vec& z) {
  switch (fam) {
    case FAM_PX: return x - z;
    case FAM_NX: return z - x;
    case FAM_F: return bv.F_values(x);
    case FAM_G: return bv.G_values(x);
    case FAM_PH: return bv.H_values(x);
    case FAM_NH: return -bv.H_values(x);
    default: throw SolverError("slack residual: bad family");
  }
}

// Closed-form slack update: coordinatewise minimizer of
//   mu.(r0 + y) + (rho/2)|r0 + y|^2 + (gamma/2)|y - y_prev|^2
// over [0, upper], which is the box projection of the unconstrained
// stationary point.
inline Vec update_slack(const Vec& y_prev, const Vec& r0, const Vec& mu,
                        double gamma, double rho, const Vec& upper) {
  if (!(gamma > 0) || !(rho > 0))
    throw SolverError("slack update: gamma and rho must be positive");
  const Vec cand = (gamma * y_prev - rho * r0 - mu) / (gamma + rho);
  return clamp_range(cand, 0.0, upper);
}

// The minimand above, exposed so tests can verify the update never loses
// to keeping the previous slack.
inline double slack_objective(const Vec& y, const Vec& y_prev, const Vec& r0,
                              const Vec& mu, double gamma, double rho) {
  const Vec r = r0 + y;
  return mu.dot(r) + 0.5 * rho * r.squaredNorm() +
         0.5 * gamma * (y - y_prev).squaredNorm();
}

}  // namespace cbal
