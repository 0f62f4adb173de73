#pragma once

#include "mess/model.hpp"
#include "mess/types.hpp"

namespace mess {

enum class VarianceKind { homoskedastic, heteroskedastic, none };

struct QmleOptions {
  double c_bound = 5.0;          // box for (lambda, rho)
  int nm_max_iter = 250;
  int newton_max_iter = 15;
  double basis_tol = 1e-11;
  VarianceKind variance = VarianceKind::homoskedastic;
  bool lambda_fixed = false;     // restricted fits (nested-model tests)
  double lambda_fixed_value = 0.0;
  bool rho_fixed = false;
  double rho_fixed_value = 0.0;
};

struct QmleFit {
  ParamVector params;            // beta, lambda, rho, sigma2
  Mat vcov;                      // (k+2)x(k+2) covariance of (beta, lambda, rho)
  Vec residuals;                 // V(gamma_hat)
  double objective = 0.0;        // Q = V'V
  double mu3 = 0.0, mu4 = 0.0;   // raw residual moments
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;
  int basis_order = 0;
};

// Minimizes Q(gamma) = V'(gamma)V(gamma): beta concentrated in closed form per
// zeta, Nelder-Mead over zeta restarted from a 3x3 grid, Newton polish on the
// full score.
QmleFit fit_qmle(const MessData& data, const QmleOptions& opts = {});

// Analytic dQ/dgamma, ordered (beta, lambda, rho).
Vec score_q(const MessData& data, const ParamVector& p);

// Observed Hessian of Q.
Mat hessian_q(const MessData& data, const ParamVector& p);

// d(dQ/dgamma)/dY', used for implicit differentiation of the estimator map.
Mat score_jacobian_y(const MessData& data, const ParamVector& p);

// (1/n) A^{-1} B A^{-1} with the closed-form A and B of the homoskedastic
// sandwich, evaluated at the fit.
Mat vcov_homo(const QmleFit& fit, const MessData& data);

// (1/n) D^{-1} F D^{-1} with Sigma_hat = Diag(squared residuals).
Mat vcov_hetero(const QmleFit& fit, const MessData& data);

std::pair<bool, double> check_commute(const WeightsMatrix& w, const WeightsMatrix& m, double tol = 1e-12);

// Dense conjugation e^{rho M} A e^{-rho M}; guarded to n <= 2000.
Mat conjugate_by_expm(const WeightsMatrix& m, double rho, const SpMat& a);

// sigma2_hat(gamma) per the first order condition: V'V/n.
double sigma2_hat(const MessData& data, const ParamVector& p);

}  // namespace mess
