#pragma once

#include <functional>

#include "mess/types.hpp"

namespace mess {

struct NelderMeadResult {
  Vec x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct NelderMeadOptions {
  int max_iter = 400;
  double f_tol = 1e-12;      // |dQ| < f_tol * (1 + |Q|)
  double x_tol = 1e-9;       // simplex diameter
  double initial_step = 0.5;
  Vec lower, upper;          // optional box, enforced by clipping
};

NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& start,
                             const NelderMeadOptions& opts = {});

// Brent minimization on [lo, hi].
double brent_minimize(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-10,
                      int max_iter = 200);

// min w' q w + 2 b' w over the probability simplex, primal active-set on the
// nonnegativity constraints. q must be symmetric PSD.
Vec simplex_qp(const Mat& q, const Vec& b, int max_iter = 200);

// Euclidean projection onto the probability simplex (used as a cross-check).
Vec project_to_simplex(const Vec& v);

}  // namespace mess
