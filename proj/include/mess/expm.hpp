#pragma once

#include "mess/types.hpp"
#include "mess/weights.hpp"

namespace mess {

struct TruncationPolicy {
  int q_max = 30;
  double tol = 1e-12;
};

// Truncated-series action: sum_{i=0..q} a^i A^i V / i!, stopping once the
// running term drops below tol in infinity norm (capped at q_max).
Mat expm_action(const SpMat& a_mat, double a, const Mat& v, const TruncationPolicy& policy = {});
Vec expm_action(const SpMat& a_mat, double a, const Vec& v, const TruncationPolicy& policy = {});
inline Mat expm_action(const WeightsMatrix& w, double a, const Mat& v, const TruncationPolicy& policy = {}) {
  return expm_action(w.mat, a, v, policy);
}
inline Vec expm_action(const WeightsMatrix& w, double a, const Vec& v, const TruncationPolicy& policy = {}) {
  return expm_action(w.mat, a, Mat(v), policy).col(0);
}

// Transpose action: sum a^i (A')^i V / i!.
Mat expm_action_t(const SpMat& a_mat, double a, const Mat& v, const TruncationPolicy& policy = {});
inline Vec expm_action_t(const SpMat& a_mat, double a, const Vec& v, const TruncationPolicy& policy = {}) {
  return expm_action_t(a_mat, a, Mat(v), policy).col(0);
}
inline Vec expm_action_t(const WeightsMatrix& w, double a, const Vec& v, const TruncationPolicy& policy = {}) {
  return expm_action_t(w.mat, a, Mat(v), policy).col(0);
}
inline Mat expm_action_t(const WeightsMatrix& w, double a, const Mat& v, const TruncationPolicy& policy = {}) {
  return expm_action_t(w.mat, a, v, policy);
}

// Smallest q with e^{c} c^{q+1}/(q+1)! below tol; the series tail bound for
// |a|*norm(A) <= c.
int truncation_order(double c, double tol, int q_max = 60);

// Stacked matrix-vector-product bases for e^{rho M} e^{lambda W} Y and
// e^{rho M} X, built once and then evaluated for any (lambda, rho) by a
// single dense product against polynomial coefficient vectors.
//
// Column maps: y1 column i(i-1)/2+j holds M^i W^j Y (1<=i<=q, 0<=j<i) with
// coefficient rho^i lambda^j / (i! j!); y2 mirrors with W and M swapped;
// y3 column i holds M^i W^i Y with coefficient (rho lambda)^i / (i!)^2;
// xb column c(q+1)+i holds M^i X_c with coefficient rho^i / i!.
struct ExpBasis {
  int n = 0, q = 0, k = 0;
  Mat y1, y2, y3;   // stacked products for the outcome term
  Vec d1, d2, d3;   // factorial scalings (d1 == d2)
  Mat xb;           // stacked powers M^i X_j
  Vec d4;

  // e^{rho M} e^{lambda W} Y
  Vec pair_action(double lambda, double rho) const;
  // e^{rho M} X
  Mat rho_x(double rho) const;
};

ExpBasis precompute_bases(const WeightsMatrix& w, const WeightsMatrix& m, const Vec& y, const Mat& x, int q);

// Dense scaling-and-squaring oracle (13th-order diagonal rational core).
// Guarded to n <= 2000; used for validation and small-n fallbacks.
Mat dense_expm(const Mat& a);

}  // namespace mess
