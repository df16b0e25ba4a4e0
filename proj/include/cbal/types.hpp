#pragma once
#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>

namespace cbal {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Every inequality or split equality of the model is tracked through one of
// six slack families. The order here fixes the layout of all per-family
// arrays (slacks, duals, bounds, residual norms) and the trace columns.
//   PX / NX : the two halves of the consensus tie X_i = Z
//   F       : quadratic inequality rows
//   G       : affine inequality rows
//   PH / NH : the two halves of the affine equality rows H = 0
enum Family { FAM_PX = 0, FAM_NX, FAM_F, FAM_G, FAM_PH, FAM_NH, FAM_COUNT };

inline constexpr const char* kFamilyNames[FAM_COUNT] = {"pX", "nX", "F",
                                                        "G",  "pH", "nH"};

// One vector per slack family, indexed by Family.
using FamilyVecs = std::array<Vec, FAM_COUNT>;

inline Vec clamp_box(const Vec& v, const Vec& halfwidth) {
  return v.cwiseMax(-halfwidth).cwiseMin(halfwidth);
}

inline Vec clamp_range(const Vec& v, double lo, const Vec& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

inline double linf(const Vec& v) {
  return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cbal
