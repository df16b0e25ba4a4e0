#pragma once
#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Problem model: linear cost over a symmetric box, with aggregative
// constraints. Every constraint value is computed from at most three
// scalar affine accumulations a(z), b(z), c(z), which is what lets each
// simulated process contribute per-subvector partial sums.
// =======================================================================

// Scalar affine form w'z + o over the full variable.
struct AffineForm {
  Vec weights;
  double offset = 0.0;

  double value(const Vec& z) const { return weights.dot(z) + offset; }

  // Partial accumulation over index range [lo, hi). Summing these over a
  // disjoint cover of 0..n plus the offset reproduces value() exactly;
  // constraint evaluation is built from such scalar pieces.
  double partial(const Vec& z, int lo, int hi) const {
    return weights.segment(lo, hi - lo).dot(z.segment(lo, hi - lo));
  }

  // Maximum of |w'z + o| over the box [-u, u].
  double range_on_box(const Vec& u) const {
    return weights.cwiseAbs().dot(u) + std::abs(offset);
  }

  bool finite() const {
    return weights.allFinite() && std::isfinite(offset);
  }
};

enum class QuadKind { SumSquare, ProductForm };

inline const char* quad_kind_name(QuadKind k) {
  return k == QuadKind::SumSquare ? "sumsquare" : "productform";
}

// One quadratic inequality row. Two shapes are supported:
//   SumSquare   : a(z) + c(z)^2            <= 0
//   ProductForm : c(z)^2 - a(z) b(z)       <= 0
// Both have the constant Hessian of rank <= 3 spanned by the weight
// vectors, which validation exploits for an exact convexity check.
struct QuadraticConstraint {
  QuadKind kind = QuadKind::SumSquare;
  AffineForm a, b, c;  // b participates only in ProductForm

  double value_from_scalars(double av, double bv, double cv) const {
    return kind == QuadKind::SumSquare ? av + cv * cv : cv * cv - av * bv;
  }

  double value(const Vec& z) const {
    const double av = a.value(z);
    const double bv = kind == QuadKind::ProductForm ? b.value(z) : 0.0;
    return value_from_scalars(av, bv, c.value(z));
  }

  Vec gradient(const Vec& z) const {
    if (kind == QuadKind::SumSquare)
      return a.weights + 2.0 * c.value(z) * c.weights;
    return 2.0 * c.value(z) * c.weights - b.value(z) * a.weights -
           a.value(z) * b.weights;
  }

  // Exact second-order term: value(z + d) - value(z) - d'grad(z), which for
  // a quadratic equals (1/2) d'Hd with H the constant Hessian. The argument
  // is a sparse direction supported on [lo, lo+d.size()).
  double half_quadratic_form(const Vec& d, int lo) const {
    const int m = static_cast<int>(d.size());
    const double cd = c.weights.segment(lo, m).dot(d);
    if (kind == QuadKind::SumSquare) return cd * cd;
    const double ad = a.weights.segment(lo, m).dot(d);
    const double bd = b.weights.segment(lo, m).dot(d);
    return cd * cd - ad * bd;
  }

  // Hessian-vector product restricted to the coordinates [lo, lo+v.size()),
  // with the input direction supported there as well.
  Vec hessian_vec(const Vec& v, int lo) const {
    const int m = static_cast<int>(v.size());
    const double cv = c.weights.segment(lo, m).dot(v);
    Vec out = 2.0 * cv * c.weights.segment(lo, m);
    if (kind == QuadKind::ProductForm) {
      const double av = a.weights.segment(lo, m).dot(v);
      const double bv = b.weights.segment(lo, m).dot(v);
      out -= bv * a.weights.segment(lo, m) + av * b.weights.segment(lo, m);
    }
    return out;
  }

  // max_s sum_t B_st u_t where B bounds the Hessian entrywise in absolute
  // value. Used to derive a curvature constant that dominates the
  // second-order term of this row over the box.
  double hess_bound_row_sum(const Vec& u) const {
    const Vec ca = a.weights.cwiseAbs();
    const Vec cc = c.weights.cwiseAbs();
    Vec bu = 2.0 * cc * cc.dot(u);
    if (kind == QuadKind::ProductForm) {
      const Vec cb = b.weights.cwiseAbs();
      bu += ca * cb.dot(u) + cb * ca.dot(u);
    }
    return bu.size() ? bu.maxCoeff() : 0.0;
  }

  // Upper bound on |value| over the box, plus headroom eps. This is the
  // slack box size that keeps the slack upper bound out of reach.
  double slack_upper(const Vec& u, double eps) const {
    const double ra = a.range_on_box(u);
    const double rc = c.range_on_box(u);
    if (kind == QuadKind::SumSquare) return ra + rc * rc + eps;
    return ra * b.range_on_box(u) + rc * rc + eps;
  }

  // Largest possible |value| over the box (slack_upper without headroom);
  // doubles as the scaling range of this row.
  double range_on_box(const Vec& u) const { return slack_upper(u, 0.0); }

  // Exact convexity check. The constant Hessian has rank <= 3 and lives in
  // span{a_w, b_w, c_w}; project onto an orthonormal basis of that span and
  // eigencheck the resulting <= 3x3 matrix.
  double min_hessian_eigenvalue() const {
    const int n = static_cast<int>(c.weights.size());
    std::vector<Vec> gens;
    gens.push_back(c.weights);
    if (kind == QuadKind::ProductForm) {
      gens.push_back(a.weights);
      gens.push_back(b.weights);
    }
    // Gram-Schmidt with a scale-relative drop tolerance.
    std::vector<Vec> basis;
    for (const Vec& g : gens) {
      Vec v = g;
      for (const Vec& q : basis) v -= q.dot(v) * q;
      const double norm = v.norm();
      if (norm > 1e-14 * std::max(1.0, g.norm())) basis.push_back(v / norm);
    }
    if (basis.empty()) return 0.0;  // zero Hessian
    const int r = static_cast<int>(basis.size());
    Mat Q(n, r);
    for (int j = 0; j < r; ++j) Q.col(j) = basis[j];
    Mat HQ(n, r);
    for (int j = 0; j < r; ++j) {
      const Vec& q = basis[j];
      Vec hq = 2.0 * c.weights.dot(q) * c.weights;
      if (kind == QuadKind::ProductForm)
        hq -= b.weights.dot(q) * a.weights + a.weights.dot(q) * b.weights;
      HQ.col(j) = hq;
    }
    Mat S = Q.transpose() * HQ;
    S = 0.5 * (S + S.transpose());  // symmetrize fp noise
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    return es.eigenvalues().minCoeff();
  }

  bool positive_semidefinite() const {
    const double lo = min_hessian_eigenvalue();
    const double scale =
        std::max({1.0, a.weights.cwiseAbs().maxCoeff(),
                  kind == QuadKind::ProductForm
                      ? b.weights.cwiseAbs().maxCoeff()
                      : 0.0,
                  c.weights.cwiseAbs().maxCoeff()});
    return lo >= -1e-12 * scale * scale;
  }
};

// Stacked affine rows sharing the dimension n.
struct AffineMap {
  std::vector<AffineForm> rows;

  int count() const { return static_cast<int>(rows.size()); }

  Vec values(const Vec& z) const {
    Vec out(count());
    for (int j = 0; j < count(); ++j) out[j] = rows[j].value(z);
    return out;
  }
};

// Aggregative convex program over the symmetric box [-u, u]:
//   minimize f'z  subject to  F(z) <= 0, G(z) <= 0, H(z) = 0.
struct Problem {
  int n = 0;
  Vec f;  // linear cost
  Vec u;  // box halfwidths, u > 0
  std::vector<QuadraticConstraint> F;
  AffineMap G;
  AffineMap H;
};

struct ConstraintValues {
  Vec F, G, H;
};

inline void require_dim(const Vec& z, int n, const char* what) {
  if (static_cast<int>(z.size()) != n) {
    std::ostringstream os;
    os << what << ": expected length " << n << ", got " << z.size();
    throw SolverError(os.str());
  }
}

inline ConstraintValues eval_constraints(const Problem& p, const Vec& z) {
  require_dim(z, p.n, "eval_constraints point");
  ConstraintValues out;
  out.F.resize(static_cast<int>(p.F.size()));
  for (size_t j = 0; j < p.F.size(); ++j)
    out.F[static_cast<int>(j)] = p.F[j].value(z);
  out.G = p.G.values(z);
  out.H = p.H.values(z);
  return out;
}

// One gradient row per quadratic constraint.
inline Mat grad_F(const Problem& p, const Vec& z) {
  require_dim(z, p.n, "grad_F point");
  Mat out(static_cast<int>(p.F.size()), p.n);
  for (size_t j = 0; j < p.F.size(); ++j)
    out.row(static_cast<int>(j)) = p.F[j].gradient(z).transpose();
  return out;
}

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> issues;
  // min Hessian eigenvalue per quadratic row (empty entries for clean rows
  // are still recorded so the report is positionally complete)
  std::vector<double> quad_min_eigenvalues;

  void fail(std::string msg) {
    ok = false;
    issues.push_back(std::move(msg));
  }
};

inline ValidationReport validate(const Problem& p) {
  ValidationReport rep;
  auto check_form = [&](const AffineForm& a, const std::string& where) {
    if (static_cast<int>(a.weights.size()) != p.n)
      rep.fail(where + ": weight length " +
               std::to_string(a.weights.size()) + " does not match n=" +
               std::to_string(p.n));
    else if (!a.finite())
      rep.fail(where + ": non-finite entries");
  };
  if (p.n <= 0) rep.fail("dimension n must be positive");
  if (static_cast<int>(p.f.size()) != p.n)
    rep.fail("cost vector length does not match n");
  else if (!p.f.allFinite())
    rep.fail("cost vector has non-finite entries");
  if (static_cast<int>(p.u.size()) != p.n)
    rep.fail("bound vector length does not match n");
  else {
    if (!p.u.allFinite()) rep.fail("bound vector has non-finite entries");
    for (int j = 0; j < p.n; ++j)
      if (p.u[j] <= 0.0)
        rep.fail("bound u[" + std::to_string(j) + "] must be positive");
  }
  for (size_t j = 0; j < p.F.size(); ++j) {
    const auto& q = p.F[j];
    const std::string where =
        "quadratic constraint " + std::to_string(j) + " (" +
        quad_kind_name(q.kind) + ")";
    check_form(q.a, where + " form a");
    check_form(q.c, where + " form c");
    if (q.kind == QuadKind::ProductForm) check_form(q.b, where + " form b");
  }
  for (size_t j = 0; j < p.G.rows.size(); ++j)
    check_form(p.G.rows[j], "inequality row " + std::to_string(j));
  for (size_t j = 0; j < p.H.rows.size(); ++j)
    check_form(p.H.rows[j], "equality row " + std::to_string(j));
  if (!rep.ok) return rep;  // eigenchecks need consistent dimensions

  for (size_t j = 0; j < p.F.size(); ++j) {
    const auto& q = p.F[j];
    const double lo = q.min_hessian_eigenvalue();
    rep.quad_min_eigenvalues.push_back(lo);
    if (!q.positive_semidefinite()) {
      std::ostringstream os;
      os << "quadratic constraint " << j << " (" << quad_kind_name(q.kind)
         << "): Hessian not positive semidefinite on its span (min eigenvalue "
         << lo << ")";
      rep.fail(os.str());
    }
  }
  return rep;
}

// Translation of a general box [lo, hi] into the symmetric form used by the
// library. Substituting z = z' + center shifts every affine offset and
// contributes a constant to the objective.
struct BoxShift {
  Problem problem;
  Vec center;
  double objective_offset = 0.0;  // f(z) = f'z' + objective_offset
};

inline BoxShift symmetrize_box(const Problem& p, const Vec& lo,
                               const Vec& hi) {
  require_dim(lo, p.n, "box lower bound");
  require_dim(hi, p.n, "box upper bound");
  for (int j = 0; j < p.n; ++j)
    if (!(lo[j] < hi[j]))
      throw SolverError("box lower bound must be strictly below upper bound");
  BoxShift out;
  out.center = 0.5 * (lo + hi);
  out.problem = p;
  out.problem.u = 0.5 * (hi - lo);
  out.objective_offset = p.f.dot(out.center);
  auto shift_form = [&](AffineForm& a) {
    a.offset += a.weights.dot(out.center);
  };
  for (auto& q : out.problem.F) {
    shift_form(q.a);
    shift_form(q.c);
    if (q.kind == QuadKind::ProductForm) shift_form(q.b);
  }
  for (auto& g : out.problem.G.rows) shift_form(g);
  for (auto& h : out.problem.H.rows) shift_form(h);
  return out;
}

}  // namespace cbal
