#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mess/model.hpp"
#include "mess/qmle.hpp"
#include "mess/types.hpp"

namespace mess {

// Quadratic + linear moment functions:
//   g(gamma) = (1/n) (V'P_1 V, ..., V'P_kp V, V'F)'
// Homoskedastic mode requires tr(P_m) = 0; heteroskedastic mode requires
// Diag(P_m) = 0.
struct MomentSet {
  std::vector<Mat> p_list;
  Mat f;
  bool diag_zero_required = false;
  std::string description;

  int n_quad() const { return static_cast<int>(p_list.size()); }
  int n_lin() const { return static_cast<int>(f.cols()); }
  int n_moments() const { return n_quad() + n_lin(); }
};

void validate_moment_set(const MomentSet& ms);

struct GmmOptions {
  double c_bound = 5.0;
  bool heteroskedastic = false;
  int nm_max_iter = 400;
  std::optional<ParamVector> start;  // defaults to the QMLE
};

struct GmmFit {
  ParamVector params;
  Mat vcov;
  Mat weighting;             // Phi actually used
  double objective = 0.0;    // g' Phi g at the solution
  bool converged = false;
  int iterations = 0;
  bool ridge_flagged = false;
  std::string moment_description;
};

Vec eval_moments(const MessData& data, const ParamVector& p, const MomentSet& ms);

// Closed forms of H = n E(g g') and G = E(dg/dgamma') at plug-ins.
Mat h_matrix(const MessData& data, const MomentSet& ms, const ParamVector& p, double sigma2, double mu3, double mu4);
Mat h_matrix_hetero(const MessData& data, const MomentSet& ms, const ParamVector& p, const Vec& sigma_diag);
Mat g_matrix(const MessData& data, const MomentSet& ms, const ParamVector& p, double sigma2);
Mat g_matrix_hetero(const MessData& data, const MomentSet& ms, const ParamVector& p, const Vec& sigma_diag);

// argmin g' Phi g from a consistent start (Nelder-Mead over the full
// parameter vector, beta included).
GmmFit fit_igmme(const MessData& data, const MomentSet& ms, const Mat& phi, const GmmOptions& opts = {});

// Feasible optimal GMM: Phi = H_hat^{-1} with plug-ins from the initial fit.
GmmFit fit_optimal(const MessData& data, const MomentSet& ms, const GmmFit& initial, const GmmOptions& opts = {});

// Default initial set: P = {W, M}, F = independent columns of [X, WX, W^2X, MX].
MomentSet default_moment_set(const MessData& data, bool diag_zero_required = false);

// Best homoskedastic moment functions built at initial estimates.
MomentSet best_moment_set(const MessData& data, const ParamVector& initial);

// Practical robust set for heteroskedasticity.
MomentSet robust_moment_set(const MessData& data, const ParamVector& initial);

// Columns of m that are independent at tolerance 1e-10 relative to the
// leading pivot, in original order.
Mat independent_columns(const Mat& m);

}  // namespace mess
