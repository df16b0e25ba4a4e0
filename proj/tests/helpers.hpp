#pragma once
#include <random>
#include <utility>
#include <vector>

#include "cbal/consensus.hpp"
#include "cbal/oracle.hpp"
#include "cbal/partition.hpp"
#include "cbal/problem.hpp"
#include "cbal/state.hpp"
#include "cbal/subproblem.hpp"

// Shared generators for the test suite. Production code never includes
// this header.

namespace cbal_test {

using namespace cbal;
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Vec random_vec(Rng& rng, int n, double lo, double hi) {
  Vec v(n);
  for (int j = 0; j < n; ++j) v[j] = uniform(rng, lo, hi);
  return v;
}

inline AffineForm random_affine(Rng& rng, int n, double scale = 1.0) {
  AffineForm a;
  a.weights = random_vec(rng, n, -scale, scale);
  a.offset = uniform(rng, -scale, scale);
  return a;
}

inline QuadraticConstraint random_sumsquare(Rng& rng, int n) {
  QuadraticConstraint q;
  q.kind = QuadKind::SumSquare;
  q.a = random_affine(rng, n);
  q.b.weights = Vec::Zero(n);
  q.b.offset = 0.0;
  q.c = random_affine(rng, n);
  return q;
}

// Product form with b proportional to -a: the Hessian becomes
// 2 c c^T + 2 s a a^T, positive semidefinite by construction.
inline QuadraticConstraint random_productform(Rng& rng, int n) {
  QuadraticConstraint q;
  q.kind = QuadKind::ProductForm;
  q.a = random_affine(rng, n);
  const double s = uniform(rng, 0.2, 1.5);
  q.b.weights = -s * q.a.weights;
  q.b.offset = uniform(rng, -1.0, 1.0);
  q.c = random_affine(rng, n);
  return q;
}

inline Problem random_problem(Rng& rng, int n, int nF, int nG, int nH) {
  Problem p;
  p.n = n;
  p.f = random_vec(rng, n, -1.0, 1.0);
  p.u = random_vec(rng, n, 0.3, 1.5);
  for (int j = 0; j < nF; ++j)
    p.F.push_back(uniform(rng, 0.0, 1.0) < 0.5 ? random_sumsquare(rng, n)
                                               : random_productform(rng, n));
  for (int j = 0; j < nG; ++j) p.G.rows.push_back(random_affine(rng, n));
  for (int j = 0; j < nH; ++j) p.H.rows.push_back(random_affine(rng, n));
  return p;
}

// A randomized mid-run snapshot: problem, partition, views, and state
// vectors positioned strictly inside their boxes. Contexts built from it
// exercise the subproblem operators away from initialization.
struct Instance {
  Problem p;
  ConsensusPartition part;
  std::vector<BlockView> views;
  SlackBounds bounds;
  Vec Z;
  std::vector<Vec> X;
  std::vector<FamilyVecs> Y, mu;
  double rho = 1.0, sigma1 = 0.0, sigma2 = 1.0;

  Instance(Rng& rng, int n, int N, int M, int nF, int nG, int nH,
           bool natural_F_slacks = true)
      : p(random_problem(rng, n, nF, nG, nH)),
        part(build_partition(p, N, M, Strategy::RoundRobin)),
        views(make_block_views(p, part)),
        bounds(slack_upper_bounds(p, part, 0.1)) {
    Z = random_vec(rng, n, -0.9, 0.9).cwiseProduct(p.u);
    rho = uniform(rng, 0.5, 2.0);
    sigma1 = uniform(rng, 0.0, 0.3);
    sigma2 = uniform(rng, 0.2, 2.0);
    for (int i = 0; i < N; ++i) {
      Vec x = Z + random_vec(rng, n, -0.3, 0.3).cwiseProduct(p.u);
      X.push_back(clamp_box(x, p.u));
      FamilyVecs y, m;
      for (int fam = 0; fam < FAM_COUNT; ++fam) {
        const Vec& ub = bounds.of(i, static_cast<Family>(fam));
        Vec yv(ub.size()), mv(ub.size());
        for (int j = 0; j < ub.size(); ++j) {
          yv[j] = uniform(rng, 0.0, 1.0) * ub[j];
          mv[j] = uniform(rng, 0.0, 1.0);
        }
        y[fam] = std::move(yv);
        m[fam] = std::move(mv);
      }
      if (natural_F_slacks) {
        // Slack at least the row's magnitude bound keeps the penalized
        // row weight nonnegative at every point of the box, the regime
        // the convexity remark relies on.
        const BlockView& bv = views[i];
        for (int j = 0; j < bv.nF(); ++j)
          y[FAM_F][j] = bv.Frow(j).range_on_box(p.u) + uniform(rng, 0.0, 0.09);
      }
      Y.push_back(std::move(y));
      mu.push_back(std::move(m));
    }
  }

  SubblockContext context(int i, int l) const {
    return make_subblock_context(views[i], part.range_lo[l], part.range_hi[l],
                                 X[i], Z, Y[i], mu[i], rho, sigma1, sigma2);
  }
};

// Central finite differences of a scalar function of a vector.
template <typename F>
Vec central_difference(F&& f, const Vec& x, double h = 1e-5) {
  Vec g(x.size());
  for (int j = 0; j < x.size(); ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    g[j] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

// The frozen desk instances mirrored by the fixture files.
inline Problem box2_problem() {
  Problem p;
  p.n = 2;
  p.f = Vec::Constant(2, -1.0);
  p.u = Vec::Constant(2, 1.0);
  return p;
}

inline Problem lp_box_problem() {
  Problem p;
  p.n = 4;
  p.f = Vec::Constant(4, -0.5);
  p.u = Vec::Constant(4, 1.0);
  auto row = [&](std::initializer_list<double> w, double off) {
    AffineForm a;
    a.weights = Vec(4);
    int j = 0;
    for (double v : w) a.weights[j++] = v;
    a.offset = off;
    return a;
  };
  p.G.rows.push_back(row({1, 1, 0, 0}, -2));
  p.G.rows.push_back(row({0, 0, 1, 1}, -2));
  p.G.rows.push_back(row({1, 0, 1, 0}, -2));
  p.H.rows.push_back(row({1, 0, 0, -1}, 0));
  return p;
}

inline Problem quad_corner_problem() {
  Problem p;
  p.n = 3;
  p.f = Vec(3);
  p.f << -0.6, -0.7, -0.75;
  p.u = Vec::Constant(3, 1.0);
  auto aff = [&](std::initializer_list<double> w, double off) {
    AffineForm a;
    a.weights = Vec(3);
    int j = 0;
    for (double v : w) a.weights[j++] = v;
    a.offset = off;
    return a;
  };
  QuadraticConstraint q1;
  q1.kind = QuadKind::SumSquare;
  q1.a = aff({0, 1, 0}, -2);
  q1.b.weights = Vec::Zero(3);
  q1.b.offset = 0.0;
  q1.c = aff({1, 0, 0}, 0);
  p.F.push_back(q1);
  QuadraticConstraint q2;
  q2.kind = QuadKind::ProductForm;
  q2.a = aff({1, 0, 0}, 0);
  q2.b = aff({-1, 0, 0}, 2);
  q2.c = aff({0, 0, 1}, 0);
  p.F.push_back(q2);
  p.G.rows.push_back(aff({1, 1, 1}, -3));
  return p;
}

inline Problem infeasible_h_problem() {
  Problem p;
  p.n = 1;
  p.f = Vec::Constant(1, -1.0);
  p.u = Vec::Constant(1, 1.0);
  AffineForm h;
  h.weights = Vec::Constant(1, 1.0);
  h.offset = -2.0;
  p.H.rows.push_back(h);
  return p;
}

// Oracle multipliers distributed onto the per-block dual layout that the
// KKT report expects; consensus duals stay zero (callers evaluate at a
// common point, so the consensus terms contribute nothing).
inline std::vector<FamilyVecs> oracle_block_duals(
    const std::vector<BlockView>& views, const Problem& p,
    const OracleSolution& sol) {
  std::vector<FamilyVecs> mu(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    const BlockView& bv = views[i];
    mu[i][FAM_PX] = mu[i][FAM_NX] = Vec::Zero(p.n);
    mu[i][FAM_F] = Vec::Zero(bv.nF());
    for (int j = 0; j < bv.nF(); ++j)
      mu[i][FAM_F][j] = sol.F_mult[bv.Fidx[j]];
    mu[i][FAM_G] = Vec::Zero(bv.nG());
    for (int j = 0; j < bv.nG(); ++j)
      mu[i][FAM_G][j] = sol.G_mult[bv.Gidx[j]];
    mu[i][FAM_PH] = Vec::Zero(bv.nH());
    mu[i][FAM_NH] = Vec::Zero(bv.nH());
    for (int j = 0; j < bv.nH(); ++j) {
      const double nu = sol.H_mult[bv.Hidx[j]];
      mu[i][FAM_PH][j] = std::max(nu, 0.0);
      mu[i][FAM_NH][j] = std::max(-nu, 0.0);
    }
  }
  return mu;
}

}  // namespace cbal_test
