#pragma once

#include "mess/model.hpp"
#include "mess/qmle.hpp"
#include "mess/types.hpp"

namespace mess {

struct MEOptions {
  double c_bound = 5.0;
  int newton_max_iter = 50;
  int max_halvings = 20;
  double score_tol = 1e-10;  // on (1/n) S^{c*}
};

struct MEFit {
  ParamVector params;   // beta, lambda, rho (no sigma2)
  Mat vcov;             // Psi^{-1} Omega Psi^{-1'} / n
  Vec residuals;
  double score_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Dense WW_D(rho) = e^{rho M} W e^{-rho M} - Diag(.) together with the diagonal
// that was removed.
struct WdParts {
  Mat wd;
  Vec diag;  // Diag(WW) entries
};
WdParts wd_matrix(const WeightsMatrix& w, const WeightsMatrix& m, double rho);

// Closed-form generalized least squares for beta given zeta (Eq. identical to
// the QMLE concentration).
Vec beta_m(const MessData& data, double lambda, double rho);

// The (lambda, rho) blocks of the adjusted score with beta_m plugged in.
Vec concentrated_score(const MessData& data, double lambda, double rho);

// Full adjusted score S*(gamma), ordered (beta, lambda, rho).
Vec adjusted_score(const MessData& data, const ParamVector& p);

// Psi(gamma) = -(1/n) dS*/dgamma' (observed Jacobian).
Mat psi_matrix(const MessData& data, const ParamVector& p);

// Omega(gamma) = Var((1/sqrt n) S*(gamma_0)) closed form with plug-in Sigma.
Mat omega_matrix(const MessData& data, const ParamVector& p, const Vec& sigma_diag);

// Damped Newton on the concentrated system, started at the QMLE zeta.
MEFit fit_m(const MessData& data, const MEOptions& opts = {});

// Finite-n identification diagnostics: the two bracketed population-score
// components evaluated over a zeta grid with plug-ins.
struct IdentDiagnostic {
  double lambda = 0.0, rho = 0.0;
  double cond_lambda = 0.0;  // lambda-equation component
  double cond_rho = 0.0;     // rho-equation component
};
std::vector<IdentDiagnostic> identification_diagnostics(const MessData& data, const ParamVector& fitted,
                                                        const Vec& sigma_diag, const std::vector<double>& lambda_grid,
                                                        const std::vector<double>& rho_grid);

}  // namespace mess
