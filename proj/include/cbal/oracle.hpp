#pragma once
#include <Eigen/QR>
#include <cmath>
#include <random>
#include <vector>

#include "cbal/problem.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Desk-scale reference solver. Exact-penalty projected descent with
// penalty continuation from many starts, plus exhaustive grids in low
// dimension. All constraint evaluation here is written as plain loops,
// independent of the library's evaluation methods, so agreement between
// solver and oracle checks the formulas and not a shared implementation.
// =======================================================================

enum class OracleStatus { Optimal, Infeasible };

struct OracleSolution {
  OracleStatus status = OracleStatus::Infeasible;
  Vec z_star;
  double f_star = 0.0;     // meaningful when Optimal
  double violation = 0.0;  // max constraint violation at z_star
  Vec F_mult, G_mult, H_mult;  // fitted multipliers (H signed)
  double tol = 0.0;
};

namespace oracle_detail {

inline double affine_at(const AffineForm& a, const Vec& z) {
  double v = a.offset;
  for (int j = 0; j < z.size(); ++j) v += a.weights[j] * z[j];
  return v;
}

inline double quad_at(const QuadraticConstraint& q, const Vec& z) {
  const double av = affine_at(q.a, z);
  const double cv = affine_at(q.c, z);
  if (q.kind == QuadKind::SumSquare) return av + cv * cv;
  return cv * cv - av * affine_at(q.b, z);
}

// g += w * (gradient of the row at z), written coordinatewise.
inline void add_quad_gradient(const QuadraticConstraint& q, const Vec& z,
                              double w, Vec& g) {
  const double cv = affine_at(q.c, z);
  if (q.kind == QuadKind::SumSquare) {
    for (int j = 0; j < g.size(); ++j)
      g[j] += w * (q.a.weights[j] + 2.0 * cv * q.c.weights[j]);
    return;
  }
  const double av = affine_at(q.a, z);
  const double bv = affine_at(q.b, z);
  for (int j = 0; j < g.size(); ++j)
    g[j] += w * (2.0 * cv * q.c.weights[j] - bv * q.a.weights[j] -
                 av * q.b.weights[j]);
}

inline double cost_at(const Problem& p, const Vec& z) {
  double v = 0.0;
  for (int j = 0; j < p.n; ++j) v += p.f[j] * z[j];
  return v;
}

inline double violation_at(const Problem& p, const Vec& z) {
  double v = 0.0;
  for (const auto& q : p.F) v = std::max(v, quad_at(q, z));
  for (const auto& g : p.G.rows) v = std::max(v, affine_at(g, z));
  for (const auto& h : p.H.rows) v = std::max(v, std::abs(affine_at(h, z)));
  for (int j = 0; j < p.n; ++j)
    v = std::max(v, std::abs(z[j]) - p.u[j]);
  return v;
}

// Exact penalty: cost plus pen times (hinged inequalities and absolute
// equalities). Its minimizer is the constrained optimum once pen exceeds
// the dual norm.
inline double penalized_at(const Problem& p, const Vec& z, double pen) {
  double v = cost_at(p, z);
  for (const auto& q : p.F) v += pen * std::max(quad_at(q, z), 0.0);
  for (const auto& g : p.G.rows) v += pen * std::max(affine_at(g, z), 0.0);
  for (const auto& h : p.H.rows) v += pen * std::abs(affine_at(h, z));
  return v;
}

inline Vec penalty_subgradient(const Problem& p, const Vec& z, double pen) {
  Vec g = Vec::Zero(p.n);
  for (int j = 0; j < p.n; ++j) g[j] = p.f[j];
  for (const auto& q : p.F)
    if (quad_at(q, z) > 0.0) add_quad_gradient(q, z, pen, g);
  for (const auto& row : p.G.rows)
    if (affine_at(row, z) > 0.0)
      for (int j = 0; j < p.n; ++j) g[j] += pen * row.weights[j];
  for (const auto& row : p.H.rows) {
    const double hv = affine_at(row, z);
    const double s = hv > 0.0 ? 1.0 : (hv < 0.0 ? -1.0 : 0.0);
    for (int j = 0; j < p.n; ++j) g[j] += pen * s * row.weights[j];
  }
  return g;
}

inline Vec project(const Problem& p, Vec z) {
  for (int j = 0; j < p.n; ++j)
    z[j] = std::min(std::max(z[j], -p.u[j]), p.u[j]);
  return z;
}

// Projected descent on the penalized objective, accepting only strict
// decreases, with step halving and regrowth. Stops on a stalled line
// search or a displacement below disp_tol.
inline Vec descend(const Problem& p, Vec z, double pen, int iters,
                   double disp_tol, double t0) {
  double t = t0;
  double fz = penalized_at(p, z, pen);
  for (int it = 0; it < iters; ++it) {
    const Vec d = penalty_subgradient(p, z, pen);
    bool accepted = false;
    Vec znew;
    double fnew = 0.0;
    while (t >= 1e-16) {
      znew = project(p, z - t * d);
      fnew = penalized_at(p, znew, pen);
      if (fnew < fz - 1e-15) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    const double disp = (znew - z).norm();
    z = znew;
    fz = fnew;
    if (disp <= disp_tol * (1.0 + z.norm())) break;
    t = std::min(t * 2.0, t0);
  }
  return z;
}

// Squared-hinge penalty: smooth everywhere, so plain gradient descent
// tracks curved active boundaries instead of stalling on the hinge kink.
// Its minimizer penetrates each active row by roughly multiplier/(2 pen)
// while staying tangentially exact, so a continuation ladder ending at a
// large penalty lands within feasibility tolerance with the boundary
// position resolved.
inline double penalized_sq_at(const Problem& p, const Vec& z, double pen) {
  double v = cost_at(p, z);
  for (const auto& q : p.F) {
    const double val = std::max(quad_at(q, z), 0.0);
    v += pen * val * val;
  }
  for (const auto& g : p.G.rows) {
    const double val = std::max(affine_at(g, z), 0.0);
    v += pen * val * val;
  }
  for (const auto& h : p.H.rows) {
    const double val = affine_at(h, z);
    v += pen * val * val;
  }
  return v;
}

inline Vec penalized_sq_gradient(const Problem& p, const Vec& z,
                                 double pen) {
  Vec g = Vec::Zero(p.n);
  for (int j = 0; j < p.n; ++j) g[j] = p.f[j];
  for (const auto& q : p.F) {
    const double val = quad_at(q, z);
    if (val > 0.0) add_quad_gradient(q, z, 2.0 * pen * val, g);
  }
  for (const auto& row : p.G.rows) {
    const double val = affine_at(row, z);
    if (val > 0.0)
      for (int j = 0; j < p.n; ++j) g[j] += 2.0 * pen * val * row.weights[j];
  }
  for (const auto& row : p.H.rows) {
    const double hv = affine_at(row, z);
    for (int j = 0; j < p.n; ++j) g[j] += 2.0 * pen * hv * row.weights[j];
  }
  return g;
}

inline Vec descend_sq(const Problem& p, Vec z, double pen, int iters,
                      double disp_tol, double t0) {
  double t = t0;
  double fz = penalized_sq_at(p, z, pen);
  for (int it = 0; it < iters; ++it) {
    const Vec d = penalized_sq_gradient(p, z, pen);
    bool accepted = false;
    Vec znew;
    double fnew = 0.0;
    while (t >= 1e-16) {
      znew = project(p, z - t * d);
      fnew = penalized_sq_at(p, znew, pen);
      if (fnew < fz - 1e-15) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    const double disp = (znew - z).norm();
    z = znew;
    fz = fnew;
    if (disp <= disp_tol * (1.0 + z.norm())) break;
    t = std::min(t * 2.0, t0);
  }
  return z;
}

// Scan an axis-aligned grid, tracking the best penalized value and the
// best feasible cost separately.
struct GridBest {
  Vec pen_z;
  double pen_val = std::numeric_limits<double>::infinity();
  Vec feas_z;
  double feas_cost = std::numeric_limits<double>::infinity();
  bool has_feasible = false;
};

inline void grid_scan(const Problem& p, const Vec& center, const Vec& half,
                      int points_per_dim, double pen, double feas_tol,
                      GridBest& best) {
  std::vector<int> idx(p.n, 0);
  Vec z(p.n);
  while (true) {
    for (int j = 0; j < p.n; ++j) {
      const double frac =
          points_per_dim == 1
              ? 0.5
              : static_cast<double>(idx[j]) / (points_per_dim - 1);
      z[j] = center[j] - half[j] + 2.0 * half[j] * frac;
      z[j] = std::min(std::max(z[j], -p.u[j]), p.u[j]);
    }
    const double pv = penalized_at(p, z, pen);
    if (pv < best.pen_val) {
      best.pen_val = pv;
      best.pen_z = z;
    }
    if (violation_at(p, z) <= feas_tol) {
      const double c = cost_at(p, z);
      if (c < best.feas_cost) {
        best.feas_cost = c;
        best.feas_z = z;
        best.has_feasible = true;
      }
    }
    int j = 0;
    for (; j < p.n; ++j) {
      if (++idx[j] < points_per_dim) break;
      idx[j] = 0;
    }
    if (j == p.n) break;
  }
}

}  // namespace oracle_detail

// Reference solve. Penalty continuation (10 up to 1e6, one decade per
// stage) from 32 random starts, every box sign corner, and the center;
// for n <= 3 an exhaustive grid (multilevel refinement for n = 3) at
// resolution 1e-3 adds a derivative-free candidate; the best candidate is
// polished at the final penalty. Multipliers come from a least-squares
// fit of the stationarity system over the active rows.
inline OracleSolution solve_reference(const Problem& p, double tol,
                                      unsigned long seed = 12345) {
  using namespace oracle_detail;
  if (p.n > 8)
    throw SolverError("oracle: supports up to 8 variables");
  if (p.F.size() + p.G.rows.size() + p.H.rows.size() > 20)
    throw SolverError("oracle: supports up to 20 constraint rows");

  const double t0 = 0.25 * (p.u.size() ? p.u.maxCoeff() : 1.0);
  std::vector<Vec> starts;
  starts.push_back(Vec::Zero(p.n));
  for (int corner = 0; corner < (1 << p.n); ++corner) {
    Vec z(p.n);
    for (int j = 0; j < p.n; ++j)
      z[j] = (corner >> j) & 1 ? p.u[j] : -p.u[j];
    starts.push_back(z);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int s = 0; s < 32; ++s) {
    Vec z(p.n);
    for (int j = 0; j < p.n; ++j) z[j] = unit(rng) * p.u[j];
    starts.push_back(z);
  }

  std::vector<Vec> candidates;
  for (const Vec& start : starts) {
    Vec z = start;
    for (int stage = 0; stage < 6; ++stage) {
      const double pen = std::pow(10.0, stage + 1);
      z = descend(p, z, pen, 300, 1e-12, t0);
    }
    candidates.push_back(z);
  }

  if (p.n <= 3) {
    GridBest best;
    if (p.n <= 2) {
      int points = 2;
      for (int j = 0; j < p.n; ++j)
        points = std::max(
            points,
            static_cast<int>(std::llround(2.0 * p.u[j] / 1e-3)) + 1);
      grid_scan(p, Vec::Zero(p.n), p.u, points, 1e6, tol, best);
    } else {
      Vec center = Vec::Zero(p.n), half = p.u;
      const int points = 41;
      double step = 2.0 * half.maxCoeff() / (points - 1);
      for (int level = 0; level < 4; ++level) {
        grid_scan(p, center, half, points, 1e6, tol, best);
        center = best.pen_z;
        half = Vec::Constant(p.n, 2.0 * step);
        step = 4.0 * step / (points - 1);
        if (step <= 1e-3 && level >= 2) break;
      }
    }
    if (best.pen_val < std::numeric_limits<double>::infinity())
      candidates.push_back(best.pen_z);
    if (best.has_feasible) candidates.push_back(best.feas_z);
  }

  // Pick the best candidate: lowest cost among feasible ones, otherwise
  // the least infeasible point.
  Vec pick;
  double pick_cost = std::numeric_limits<double>::infinity();
  bool found_feasible = false;
  double min_viol = std::numeric_limits<double>::infinity();
  Vec min_viol_z;
  for (const Vec& z : candidates) {
    const double viol = violation_at(p, z);
    if (viol < min_viol) {
      min_viol = viol;
      min_viol_z = z;
    }
    if (viol <= tol && cost_at(p, z) < pick_cost) {
      pick = z;
      pick_cost = cost_at(p, z);
      found_feasible = true;
    }
  }
  if (!found_feasible) pick = min_viol_z;

  // Hinge descent gets close fast but stalls tangentially on curved
  // active boundaries; the squared-hinge continuation finishes the job.
  // No hinge pass afterwards: from the ladder's tiny penetration the
  // hinge cliff makes any accepted step overshoot into the interior.
  Vec polished = descend(p, pick, 1e6, 3000, 1e-8, t0);
  for (const double pen : {1e2, 1e4, 1e6, 1e8})
    polished = descend_sq(p, polished, pen, 2000, 1e-10, t0);
  if (found_feasible && violation_at(p, polished) > tol &&
      cost_at(p, polished) >= pick_cost)
    polished = pick;  // polish must not trade feasibility away

  OracleSolution sol;
  sol.tol = tol;
  sol.z_star = polished;
  sol.violation = violation_at(p, polished);
  sol.F_mult = Vec::Zero(static_cast<int>(p.F.size()));
  sol.G_mult = Vec::Zero(static_cast<int>(p.G.rows.size()));
  sol.H_mult = Vec::Zero(static_cast<int>(p.H.rows.size()));
  if (sol.violation > tol) {
    sol.status = OracleStatus::Infeasible;
    sol.f_star = cost_at(p, polished);
    return sol;
  }
  sol.status = OracleStatus::Optimal;
  sol.f_star = cost_at(p, polished);

  // Stationarity fit: f + sum(active columns times multipliers) = 0 in
  // least squares; box normals take up whatever the rows cannot.
  const double act_tol = std::max(10.0 * tol, 1e-6);
  std::vector<Vec> cols;
  std::vector<int> col_tag;  // encodes family and row for write-back
  const Vec& z = sol.z_star;
  for (size_t j = 0; j < p.F.size(); ++j)
    if (std::abs(quad_at(p.F[j], z)) <= act_tol) {
      Vec g = Vec::Zero(p.n);
      add_quad_gradient(p.F[j], z, 1.0, g);
      cols.push_back(g);
      col_tag.push_back(static_cast<int>(j));
    }
  const int nF_active = static_cast<int>(cols.size());
  for (size_t j = 0; j < p.G.rows.size(); ++j)
    if (std::abs(affine_at(p.G.rows[j], z)) <= act_tol) {
      cols.push_back(p.G.rows[j].weights);
      col_tag.push_back(static_cast<int>(j));
    }
  const int nG_active = static_cast<int>(cols.size()) - nF_active;
  for (size_t j = 0; j < p.H.rows.size(); ++j) {
    cols.push_back(p.H.rows[j].weights);
    col_tag.push_back(static_cast<int>(j));
  }
  const int nH_all = static_cast<int>(p.H.rows.size());
  for (int j = 0; j < p.n; ++j)
    if (std::abs(z[j]) >= p.u[j] - act_tol) {
      Vec e = Vec::Zero(p.n);
      e[j] = z[j] >= 0.0 ? 1.0 : -1.0;
      cols.push_back(e);
      col_tag.push_back(j);
    }
  if (!cols.empty()) {
    // Sign-constrained columns (everything but H) that come out negative
    // are pruned and the system re-solved, so the reported multipliers
    // satisfy both the fit and their sign constraints.
    std::vector<bool> keep(cols.size(), true);
    Vec m = Vec::Zero(static_cast<int>(cols.size()));
    for (int pass = 0; pass < static_cast<int>(cols.size()) + 1; ++pass) {
      std::vector<int> active;
      for (size_t c = 0; c < cols.size(); ++c)
        if (keep[c]) active.push_back(static_cast<int>(c));
      if (active.empty()) break;
      Mat A(p.n, static_cast<int>(active.size()));
      for (size_t c = 0; c < active.size(); ++c)
        A.col(static_cast<int>(c)) = cols[active[c]];
      const Vec ma = A.colPivHouseholderQr().solve(-p.f);
      m.setZero();
      bool pruned = false;
      for (size_t c = 0; c < active.size(); ++c) {
        const int col = active[c];
        const bool signed_col = col >= nF_active + nG_active &&
                                col < nF_active + nG_active + nH_all;
        if (!signed_col && ma[static_cast<int>(c)] < -1e-12) {
          keep[col] = false;
          pruned = true;
        } else {
          m[col] = ma[static_cast<int>(c)];
        }
      }
      if (!pruned) break;
    }
    for (int c = 0; c < nF_active; ++c)
      sol.F_mult[col_tag[c]] = std::max(m[c], 0.0);
    for (int c = 0; c < nG_active; ++c)
      sol.G_mult[col_tag[nF_active + c]] = std::max(m[nF_active + c], 0.0);
    for (int c = 0; c < nH_all; ++c)
      sol.H_mult[col_tag[nF_active + nG_active + c]] =
          m[nF_active + nG_active + c];
  }
  return sol;
}

// Gap report between a candidate solution and the reference.
struct GapReport {
  double objective_gap_rel = 0.0;  // (f(z) - f*) / (1 + |f*|)
  double max_violation = 0.0;
  double max_coord_distance = 0.0;
  int matching_coordinates = 0;  // coordinates equal within match_tol
  double match_tol = 1e-3;
};

inline GapReport compare(const Vec& solution, const OracleSolution& oracle,
                         const Problem& p) {
  using namespace oracle_detail;
  if (oracle.status != OracleStatus::Optimal)
    throw SolverError("compare: reference is not optimal");
  GapReport rep;
  rep.objective_gap_rel = (cost_at(p, solution) - oracle.f_star) /
                          (1.0 + std::abs(oracle.f_star));
  rep.max_violation = violation_at(p, solution);
  rep.max_coord_distance = linf(solution - oracle.z_star);
  for (int j = 0; j < p.n; ++j)
    if (std::abs(solution[j] - oracle.z_star[j]) <= rep.match_tol)
      ++rep.matching_coordinates;
  return rep;
}

}  // namespace cbal
