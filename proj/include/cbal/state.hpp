#pragma once
#include <vector>

#include "cbal/partition.hpp"
#include "cbal/problem.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Iterate storage for the whole process grid, plus the residual map that
// every other module consumes. Residuals are "extended": each raw
// constraint value is shifted by its slack so feasibility of the
// augmented system means every family vector is exactly zero.
// =======================================================================

struct GlobalState {
  Vec Z;                              // shared decision vector
  std::vector<Vec> X;                 // block copies, one per block
  std::vector<FamilyVecs> Y;          // slacks per block
  std::vector<FamilyVecs> mu;         // duals per block
  std::vector<FamilyVecs> mu_upper;   // dual caps per block
  long k = 0;                         // completed iteration count
};

// Extended residuals of one block at the given primal/slack point.
//   pX: x - z + y_pX        nX: z - x + y_nX
//   F:  F(x) + y_F          G:  G(x) + y_G
//   pH: H(x) + y_pH         nH: -H(x) + y_nH
inline FamilyVecs residuals(const BlockView& bv, const Vec& x, const Vec& z,
                            const FamilyVecs& y) {
  FamilyVecs r;
  r[FAM_PX] = x - z + y[FAM_PX];
  r[FAM_NX] = z - x + y[FAM_NX];
  r[FAM_F] = bv.F_values(x) + y[FAM_F];
  r[FAM_G] = bv.G_values(x) + y[FAM_G];
  const Vec h = bv.H_values(x);
  r[FAM_PH] = h + y[FAM_PH];
  r[FAM_NH] = -h + y[FAM_NH];
  return r;
}

inline double max_family_residual(const FamilyVecs& r) {
  double m = 0.0;
  for (int fam = 0; fam < FAM_COUNT; ++fam) m = std::max(m, linf(r[fam]));
  return m;
}

// Verifies the range invariants that every iteration must preserve:
// box membership of X and Z, slack membership of [0, bound], and dual
// membership of [0, cap]. Throws on the first violation; the message
// names the block and family so a failing run can be triaged from the
// error alone.
inline void check_state(const Problem& p, const ConsensusPartition& part,
                        const SlackBounds& bounds, const GlobalState& s,
                        double tol = 1e-12) {
  auto in_range = [tol](const Vec& v, const Vec& lo, const Vec& hi) {
    return (v.array() >= lo.array() - tol).all() &&
           (v.array() <= hi.array() + tol).all();
  };
  if (!in_range(s.Z, -p.u, p.u)) throw SolverError("state: Z left the box");
  for (int i = 0; i < part.N; ++i) {
    if (!in_range(s.X[i], -p.u, p.u))
      throw SolverError("state: X left the box in block " +
                        std::to_string(i));
    for (int fam = 0; fam < FAM_COUNT; ++fam) {
      const Vec& y = s.Y[i][fam];
      const Vec& ub = bounds.of(i, static_cast<Family>(fam));
      if (y.size() > 0 &&
          !in_range(y, Vec::Zero(y.size()), ub))
        throw SolverError(std::string("state: slack ") + kFamilyNames[fam] +
                          " out of range in block " + std::to_string(i));
      const Vec& m = s.mu[i][fam];
      const Vec& cap = s.mu_upper[i][fam];
      if (m.size() > 0 && !in_range(m, Vec::Zero(m.size()), cap))
        throw SolverError(std::string("state: dual ") + kFamilyNames[fam] +
                          " out of range in block " + std::to_string(i));
    }
  }
}

}  // namespace cbal
