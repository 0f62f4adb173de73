#include "mess/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mess {

namespace {

Vec clip_box(Vec x, const NelderMeadOptions& opts) {
  if (opts.lower.size() == x.size()) x = x.cwiseMax(opts.lower);
  if (opts.upper.size() == x.size()) x = x.cwiseMin(opts.upper);
  return x;
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& start,
                             const NelderMeadOptions& opts) {
  const int d = static_cast<int>(start.size());
  std::vector<Vec> pts(d + 1);
  std::vector<double> vals(d + 1);
  pts[0] = clip_box(start, opts);
  vals[0] = f(pts[0]);
  for (int i = 0; i < d; ++i) {
    Vec p = pts[0];
    p[i] += opts.initial_step;
    pts[i + 1] = clip_box(p, opts);
    if ((pts[i + 1] - pts[0]).norm() < 1e-14) {
      pts[i + 1] = pts[0];
      pts[i + 1][i] -= opts.initial_step;
      pts[i + 1] = clip_box(pts[i + 1], opts);
    }
    vals[i + 1] = f(pts[i + 1]);
  }

  NelderMeadResult res;
  std::vector<int> order(d + 1);
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
    const int best = order[0], worst = order[d], second = order[d - 1];

    double diam = 0.0;
    for (int i = 1; i <= d; ++i) diam = std::max(diam, (pts[order[i]] - pts[best]).norm());
    if (std::fabs(vals[worst] - vals[best]) < opts.f_tol * (1.0 + std::fabs(vals[best])) && diam < opts.x_tol) {
      res.converged = true;
      break;
    }

    Vec centroid = Vec::Zero(d);
    for (int i = 0; i <= d; ++i)
      if (i != worst) centroid += pts[i];
    centroid /= d;

    const Vec xr = clip_box(centroid + (centroid - pts[worst]), opts);
    const double fr = f(xr);
    if (fr < vals[best]) {
      const Vec xe = clip_box(centroid + 2.0 * (centroid - pts[worst]), opts);
      const double fe = f(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
    } else if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
    } else {
      const Vec xc = clip_box(centroid + 0.5 * (pts[worst] - centroid), opts);
      const double fc = f(xc);
      if (fc < vals[worst]) {
        pts[worst] = xc;
        vals[worst] = fc;
      } else {
        for (int i = 0; i <= d; ++i) {
          if (i == best) continue;
          pts[i] = clip_box(pts[best] + 0.5 * (pts[i] - pts[best]), opts);
          vals[i] = f(pts[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= d; ++i)
    if (vals[i] < vals[best]) best = i;
  res.x = pts[best];
  res.value = vals[best];
  res.iterations = iter;
  return res;
}

double brent_minimize(const std::function<double(double)>& f, double lo, double hi, double tol, int max_iter) {
  const double golden = 0.3819660112501051;
  double a = lo, b = hi;
  double x = a + golden * (b - a), w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const double m = 0.5 * (a + b);
    const double tol1 = tol * std::fabs(x) + 1e-12;
    const double tol2 = 2.0 * tol1;
    if (std::fabs(x - m) <= tol2 - 0.5 * (b - a)) break;
    bool use_golden = true;
    if (std::fabs(e) > tol1) {
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::fabs(q);
      const double etmp = e;
      e = d;
      if (std::fabs(p) < std::fabs(0.5 * q * etmp) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (m > x) ? tol1 : -tol1;
        use_golden = false;
      }
    }
    if (use_golden) {
      e = (x < m) ? b - x : a - x;
      d = golden * e;
    }
    const double u = (std::fabs(d) >= tol1) ? x + d : x + ((d > 0.0) ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  return x;
}

Vec project_to_simplex(const Vec& v) {
  const int n = static_cast<int>(v.size());
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int rho = 0;
  for (int i = 0; i < n; ++i) {
    css += u[i];
    const double t = (css - 1.0) / (i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      theta = t;
    }
  }
  (void)rho;
  return (v.array() - theta).cwiseMax(0.0);
}

Vec simplex_qp(const Mat& q, const Vec& b, int max_iter) {
  const int s = static_cast<int>(b.size());
  if (q.rows() != s || q.cols() != s) throw std::invalid_argument("simplex_qp: dimension mismatch");
  if (s == 1) return Vec::Ones(1);

  std::vector<bool> active(s, false);

  auto solve_free = [&](Vec& w, double& mu) {
    std::vector<int> free;
    for (int i = 0; i < s; ++i)
      if (!active[i]) free.push_back(i);
    const int m = static_cast<int>(free.size());
    Mat kkt = Mat::Zero(m + 1, m + 1);
    Vec rhs(m + 1);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) kkt(i, j) = 2.0 * q(free[i], free[j]);
      kkt(i, i) += 1e-12;  // guard against rank-deficient duplicate candidates
      kkt(i, m) = kkt(m, i) = 1.0;
      rhs[i] = -2.0 * b[free[i]];
    }
    rhs[m] = 1.0;
    Vec sol = kkt.fullPivLu().solve(rhs);
    w = Vec::Zero(s);
    for (int i = 0; i < m; ++i) w[free[i]] = sol[i];
    mu = sol[m];
  };

  Vec w = Vec::Constant(s, 1.0 / s);
  double mu = 0.0;
  for (int iter = 0; iter < max_iter; ++iter) {
    Vec w_new;
    solve_free(w_new, mu);
    double min_w = 0.0;
    int min_i = -1;
    for (int i = 0; i < s; ++i)
      if (!active[i] && w_new[i] < min_w - 1e-14) {
        min_w = w_new[i];
        min_i = i;
      }
    if (min_i >= 0) {
      // step from w toward w_new until the first free coordinate hits zero
      double alpha = 1.0;
      int blocker = min_i;
      for (int i = 0; i < s; ++i) {
        if (active[i] || w_new[i] >= 0.0) continue;
        const double denom = w[i] - w_new[i];
        if (denom > 1e-15) {
          const double a = w[i] / denom;
          if (a < alpha) {
            alpha = a;
            blocker = i;
          }
        }
      }
      w = w + alpha * (w_new - w);
      w[blocker] = 0.0;
      active[blocker] = true;
      continue;
    }
    w = w_new;
    // dual feasibility of active constraints
    const Vec grad = 2.0 * (q * w + b);
    double worst = -1e-10;
    int release = -1;
    for (int i = 0; i < s; ++i)
      if (active[i]) {
        const double kappa = grad[i] - mu;
        if (kappa < worst) {
          worst = kappa;
          release = i;
        }
      }
    if (release < 0) break;
    active[release] = false;
  }
  // final cleanup for exact feasibility
  w = w.cwiseMax(0.0);
  w /= w.sum();
  return w;
}

}  // namespace mess
