#pragma once
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cbal/problem.hpp"
#include "cbal/types.hpp"

namespace cbal {

// =======================================================================
// Range scaling. Penalty terms of all constraint rows should carry
// comparable weight, so each affine row is rescaled to a common attainable
// range over the box, each quadratic row to half that range (its penalty
// enters with fourth-order variable dependence), and the cost so that
// |f|_inf |u|_inf matches the range. The record inverts the scaling
// exactly for objectives and multipliers.
// =======================================================================

struct ScalingRecord {
  double f_scale = 1.0;  // scaled f = f_scale * original f
  std::vector<double> F_scales, G_scales, H_scales;  // scaled row = s * row
  std::vector<std::string> flags;  // zero-range rows left unscaled

  bool identity() const {
    auto all_one = [](const std::vector<double>& v) {
      for (double s : v)
        if (s != 1.0) return false;
      return true;
    };
    return f_scale == 1.0 && all_one(F_scales) && all_one(G_scales) &&
           all_one(H_scales);
  }

  double unscale_objective(double v) const { return v / f_scale; }

  // A multiplier fitted on the scaled system maps back to the original
  // system by the ratio of its row scale to the cost scale.
  double unscale_multiplier(Family fam, int row, double mu) const {
    double s = 1.0;
    switch (fam) {
      case FAM_F: s = F_scales[row]; break;
      case FAM_G: s = G_scales[row]; break;
      case FAM_PH:
      case FAM_NH: s = H_scales[row]; break;
      default: break;  // consensus families are unaffected by row scaling
    }
    return mu * s / f_scale;
  }
};

inline std::pair<Problem, ScalingRecord> scale_problem(const Problem& p,
                                                       double target_range) {
  if (target_range <= 0)
    throw SolverError("target_range must be positive");
  Problem out = p;
  ScalingRecord rec;

  auto scale_affine_row = [&](AffineForm& row, std::vector<double>& scales,
                              const char* what, size_t idx) {
    const double range = row.range_on_box(p.u);
    if (range <= 0.0) {
      scales.push_back(1.0);
      rec.flags.push_back(std::string(what) + " row " + std::to_string(idx) +
                          " has zero range on the box; left unscaled");
      return;
    }
    const double s = target_range / range;
    row.weights *= s;
    row.offset *= s;
    scales.push_back(s);
  };
  for (size_t j = 0; j < out.G.rows.size(); ++j)
    scale_affine_row(out.G.rows[j], rec.G_scales, "inequality", j);
  for (size_t j = 0; j < out.H.rows.size(); ++j)
    scale_affine_row(out.H.rows[j], rec.H_scales, "equality", j);

  for (size_t j = 0; j < out.F.size(); ++j) {
    QuadraticConstraint& q = out.F[j];
    const double range = q.range_on_box(p.u);
    if (range <= 0.0) {
      rec.F_scales.push_back(1.0);
      rec.flags.push_back("quadratic row " + std::to_string(j) +
                          " has zero range on the box; left unscaled");
      continue;
    }
    const double s = (0.5 * target_range) / range;
    const double sq = std::sqrt(s);
    if (q.kind == QuadKind::SumSquare) {
      q.a.weights *= s;
      q.a.offset *= s;
      q.c.weights *= sq;
      q.c.offset *= sq;
    } else {
      for (AffineForm* form : {&q.a, &q.b, &q.c}) {
        form->weights *= sq;
        form->offset *= sq;
      }
    }
    rec.F_scales.push_back(s);
  }

  const double fmax = p.f.size() ? p.f.cwiseAbs().maxCoeff() : 0.0;
  const double umax = p.u.size() ? p.u.maxCoeff() : 0.0;
  if (fmax * umax > 0.0) {
    rec.f_scale = target_range / (fmax * umax);
    out.f *= rec.f_scale;
  } else {
    rec.f_scale = 1.0;
    rec.flags.push_back("cost vector is zero; left unscaled");
  }
  return {std::move(out), std::move(rec)};
}

}  // namespace cbal
