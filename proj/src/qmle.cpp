#include "mess/qmle.hpp"

#include <cmath>
#include <stdexcept>

#include "mess/optim.hpp"

namespace mess {

namespace {

struct Concentrated {
  const ExpBasis& basis;
  const Mat& x;

  // returns Q(zeta) and fills beta/residuals
  double eval(double lambda, double rho, Vec& beta, Vec& v) const {
    const Mat xt = basis.rho_x(rho);
    const Vec yt = basis.pair_action(lambda, rho);
    beta = (xt.transpose() * xt).llt().solve(xt.transpose() * yt);
    v = yt - xt * beta;
    return v.squaredNorm();
  }
};

}  // namespace

double sigma2_hat(const MessData& data, const ParamVector& p) {
  const Vec v = residuals(data, p);
  return v.squaredNorm() / data.n();
}

Vec score_q(const MessData& data, const ParamVector& p) {
  const int k = data.k();
  const Vec v = residuals(data, p);
  const Vec yz = expm_action(data.m, p.rho, Vec(data.w.mat * expm_action(data.w, p.lambda, data.y)));
  Vec s(k + 2);
  s.head(k) = -2.0 * data.x.transpose() * expm_action_t(data.m, p.rho, v);
  s[k] = 2.0 * v.dot(yz);
  s[k + 1] = 2.0 * v.dot(data.m.mat * v);
  return s;
}

Mat hessian_q(const MessData& data, const ParamVector& p) {
  const int k = data.k();
  const Vec v = residuals(data, p);
  const Vec ely = expm_action(data.w, p.lambda, data.y);
  const Vec yz = expm_action(data.m, p.rho, Vec(data.w.mat * ely));
  const Vec w2y = expm_action(data.m, p.rho, Vec(data.w.mat * (data.w.mat * ely)));
  const Mat xt = expm_action(data.m, p.rho, data.x);
  const Vec msv = data.m.mat * v + data.m.mat.transpose() * v;

  Mat h(k + 2, k + 2);
  h.topLeftCorner(k, k) = 2.0 * xt.transpose() * xt;
  h.block(0, k, k, 1) = -2.0 * xt.transpose() * yz;
  h.block(0, k + 1, k, 1) = -2.0 * data.x.transpose() * expm_action_t(data.m, p.rho, msv);
  h(k, k) = 2.0 * yz.squaredNorm() + 2.0 * v.dot(w2y);
  h(k, k + 1) = 2.0 * v.dot(data.m.mat * yz) + 2.0 * yz.dot(data.m.mat * v);
  h(k + 1, k + 1) = 2.0 * v.dot(data.m.mat * (data.m.mat * v)) + 2.0 * (data.m.mat * v).squaredNorm();
  h.block(k, 0, 1, k) = h.block(0, k, k, 1).transpose();
  h.block(k + 1, 0, 1, k) = h.block(0, k + 1, k, 1).transpose();
  h(k + 1, k) = h(k, k + 1);
  return h;
}

Mat score_jacobian_y(const MessData& data, const ParamVector& p) {
  const int k = data.k();
  const int n = data.n();
  const Vec v = residuals(data, p);
  const Vec yz = expm_action(data.m, p.rho, Vec(data.w.mat * expm_action(data.w, p.lambda, data.y)));
  const Mat xt = expm_action(data.m, p.rho, data.x);

  Mat jac(k + 2, n);
  const Mat tx = expm_action_t(data.w, p.lambda, expm_action_t(data.m, p.rho, xt));
  jac.topRows(k) = -2.0 * tx.transpose();
  const Vec t_lambda1 = expm_action_t(data.w, p.lambda, expm_action_t(data.m, p.rho, yz));
  const Vec t_lambda2 = expm_action_t(data.w, p.lambda, Vec(data.w.mat.transpose() * expm_action_t(data.m, p.rho, v)));
  jac.row(k) = 2.0 * (t_lambda1 + t_lambda2).transpose();
  const Vec msv = data.m.mat * v + data.m.mat.transpose() * v;
  jac.row(k + 1) = 2.0 * expm_action_t(data.w, p.lambda, expm_action_t(data.m, p.rho, msv)).transpose();
  return jac;
}

QmleFit fit_qmle(const MessData& data, const QmleOptions& opts) {
  const int k = data.k();
  const int n = data.n();
  const double wnorm = std::max(inf_norm(data.w), inf_norm(data.m));
  const int q = truncation_order(opts.c_bound * std::max(wnorm, 1e-8), opts.basis_tol, 40);
  const ExpBasis basis = precompute_bases(data.w, data.m, data.y, data.x, q);
  const Concentrated conc{basis, data.x};

  auto objective = [&](const Vec& zeta) {
    Vec beta, v;
    const double lam = opts.lambda_fixed ? opts.lambda_fixed_value : zeta[0];
    const double rho = opts.rho_fixed ? opts.rho_fixed_value : zeta[1];
    return conc.eval(lam, rho, beta, v);
  };

  NelderMeadOptions nm;
  nm.max_iter = opts.nm_max_iter;
  nm.f_tol = 1e-10;
  nm.x_tol = 1e-8;
  nm.lower = Vec::Constant(2, -opts.c_bound);
  nm.upper = Vec::Constant(2, opts.c_bound);
  if (opts.lambda_fixed) nm.lower[0] = nm.upper[0] = opts.lambda_fixed_value;
  if (opts.rho_fixed) nm.lower[1] = nm.upper[1] = opts.rho_fixed_value;

  NelderMeadResult best;
  best.value = std::numeric_limits<double>::infinity();
  int total_iters = 0;
  const double g = opts.c_bound / 2.0;
  for (double l0 : {-g, 0.0, g}) {
    for (double r0 : {-g, 0.0, g}) {
      Vec start(2);
      start << (opts.lambda_fixed ? opts.lambda_fixed_value : l0), (opts.rho_fixed ? opts.rho_fixed_value : r0);
      NelderMeadResult r = nelder_mead(objective, start, nm);
      total_iters += r.iterations;
      if (r.value < best.value) best = r;
      if (opts.rho_fixed) break;
    }
    if (opts.lambda_fixed) break;
  }

  ParamVector p;
  p.lambda = opts.lambda_fixed ? opts.lambda_fixed_value : best.x[0];
  p.rho = opts.rho_fixed ? opts.rho_fixed_value : best.x[1];
  {
    Vec beta, v;
    conc.eval(p.lambda, p.rho, beta, v);
    p.beta = beta;
  }

  // Newton polish on the full score; fixed spatial parameters stay pinned by
  // zeroing their rows/columns.
  double q_val = residuals(data, p).squaredNorm();
  for (int it = 0; it < opts.newton_max_iter; ++it) {
    Vec s = score_q(data, p);
    Mat h = hessian_q(data, p);
    if (opts.lambda_fixed) {
      h.row(k).setZero();
      h.col(k).setZero();
      h(k, k) = 1.0;
      s[k] = 0.0;
    }
    if (opts.rho_fixed) {
      h.row(k + 1).setZero();
      h.col(k + 1).setZero();
      h(k + 1, k + 1) = 1.0;
      s[k + 1] = 0.0;
    }
    Vec step = h.ldlt().solve(-s);
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 20; ++half) {
      ParamVector trial = p;
      trial.beta += scale * step.head(k);
      trial.lambda = std::clamp(trial.lambda + scale * step[k], -opts.c_bound, opts.c_bound);
      trial.rho = std::clamp(trial.rho + scale * step[k + 1], -opts.c_bound, opts.c_bound);
      const double q_trial = residuals(data, trial).squaredNorm();
      if (q_trial <= q_val + 1e-12 * (1.0 + q_val)) {
        p = trial;
        q_val = q_trial;
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    ++total_iters;
    if (!improved || step.lpNorm<Eigen::Infinity>() < 1e-12) break;
  }

  QmleFit fit;
  fit.params = p;
  fit.residuals = residuals(data, p);
  fit.objective = fit.residuals.squaredNorm();
  fit.params.sigma2 = fit.objective / n;
  fit.mu3 = fit.residuals.array().cube().mean();
  fit.mu4 = fit.residuals.array().pow(4).mean();
  {
    Vec s = score_q(data, p);
    if (opts.lambda_fixed) s[k] = 0.0;
    if (opts.rho_fixed) s[k + 1] = 0.0;
    fit.score_norm = s.lpNorm<Eigen::Infinity>();
  }
  fit.iterations = total_iters;
  fit.converged = fit.score_norm < 1e-6 || best.converged;
  fit.basis_order = q;
  switch (opts.variance) {
    case VarianceKind::homoskedastic:
      fit.vcov = vcov_homo(fit, data);
      break;
    case VarianceKind::heteroskedastic:
      fit.vcov = vcov_hetero(fit, data);
      break;
    case VarianceKind::none:
      break;
  }
  return fit;
}

Mat conjugate_by_expm(const WeightsMatrix& m, double rho, const SpMat& a) {
  const int n = m.n;
  if (n > 2000) throw std::invalid_argument("conjugate_by_expm: size guard exceeded (n > 2000)");
  // e^{rho M} (A e^{-rho M}) via actions on dense blocks
  Mat right = expm_action(m, -rho, Mat(Mat::Identity(n, n)));
  Mat prod = a * right;
  return expm_action(m, rho, prod);
}

namespace {

// Shared pieces for both sandwiches.
struct SandwichParts {
  Mat xt;      // e^{rho M} X
  Vec c;       // e^{rho M} W X beta = WW xt beta
  Mat ww;      // dense conjugated W
  Mat ww_s;    // ww + ww'
  Vec diag_ww;
};

SandwichParts sandwich_parts(const QmleFit& fit, const MessData& data) {
  SandwichParts parts;
  parts.xt = expm_action(data.m, fit.params.rho, data.x);
  parts.c = expm_action(data.m, fit.params.rho, Vec(data.w.mat * (data.x * fit.params.beta)));
  parts.ww = conjugate_by_expm(data.m, fit.params.rho, data.w.mat);
  parts.ww_s = parts.ww + parts.ww.transpose();
  parts.diag_ww = parts.ww.diagonal();
  return parts;
}

double trace_sparse_dense(const SpMat& s, const Mat& dsym) {
  // tr(S' D) for symmetric D equals the elementwise dot of S with D
  double acc = 0.0;
  for (int i = 0; i < s.outerSize(); ++i)
    for (SpMat::InnerIterator it(s, i); it; ++it) acc += it.value() * dsym(it.row(), it.col());
  return acc;
}

}  // namespace

Mat vcov_homo(const QmleFit& fit, const MessData& data) {
  const int k = data.k();
  const int n = data.n();
  const double s2 = fit.params.sigma2;
  const SandwichParts parts = sandwich_parts(fit, data);
  const SpMat ms = SpMat(data.m.mat + SpMat(data.m.mat.transpose()));

  Mat a = Mat::Zero(k + 2, k + 2);
  a.topLeftCorner(k, k) = parts.xt.transpose() * parts.xt;
  a.block(0, k, k, 1) = -parts.xt.transpose() * parts.c;
  a(k, k) = parts.c.squaredNorm() + 0.5 * s2 * parts.ww_s.squaredNorm();
  a(k, k + 1) = 0.5 * s2 * trace_sparse_dense(ms, parts.ww_s);
  a(k + 1, k + 1) = 0.5 * s2 * Mat(ms).squaredNorm();
  a.block(k, 0, 1, k) = a.block(0, k, k, 1).transpose();
  a(k + 1, k) = a(k, k + 1);
  a /= n;

  Mat corr = Mat::Zero(k + 2, k + 2);
  const double excess = fit.mu4 - 3.0 * s2 * s2;
  corr.block(k, 0, 1, k) = -fit.mu3 * (parts.diag_ww.transpose() * parts.xt);
  corr.block(0, k, k, 1) = corr.block(k, 0, 1, k).transpose();
  corr(k, k) = excess * parts.diag_ww.squaredNorm() + 2.0 * fit.mu3 * parts.c.dot(parts.diag_ww);
  const Mat b = s2 * a + corr / n;

  Mat a_inv = a.ldlt().solve(Mat::Identity(k + 2, k + 2));
  if (!a_inv.allFinite()) throw std::runtime_error("vcov_homo: singular A matrix");
  return (a_inv * b * a_inv) / n;
}

Mat vcov_hetero(const QmleFit& fit, const MessData& data) {
  const int k = data.k();
  const int n = data.n();
  const Vec sig = fit.residuals.array().square();
  const SandwichParts parts = sandwich_parts(fit, data);
  const Mat ms = Mat(data.m.mat) + Mat(data.m.mat.transpose());

  // traces with one diagonal weighting: tr(A^s B Sigma) = sum_j sigma_j * (A^s B)_{jj}
  const Mat ww_sig = parts.ww * sig.asDiagonal();  // t(ww^s ww sig) etc. assembled below
  Mat d = Mat::Zero(k + 2, k + 2);
  d.topLeftCorner(k, k) = parts.xt.transpose() * parts.xt;
  d.block(0, k, k, 1) = -parts.xt.transpose() * parts.c;
  d(k, k) = parts.c.squaredNorm() + (parts.ww_s.transpose().cwiseProduct(ww_sig)).sum();
  d(k, k + 1) = (ms.transpose().cwiseProduct(ww_sig)).sum();
  d(k + 1, k + 1) = (ms.transpose().cwiseProduct(Mat(Mat(data.m.mat) * sig.asDiagonal()))).sum();
  d.block(k, 0, 1, k) = d.block(0, k, k, 1).transpose();
  d(k + 1, k) = d(k, k + 1);
  d /= n;

  const Mat sws = sig.asDiagonal() * parts.ww_s;
  const Mat sms = sig.asDiagonal() * ms;
  Mat f = Mat::Zero(k + 2, k + 2);
  f.topLeftCorner(k, k) = parts.xt.transpose() * sig.asDiagonal() * parts.xt;
  f.block(0, k, k, 1) = -parts.xt.transpose() * sig.cwiseProduct(parts.c);
  f(k, k) = parts.c.dot(sig.cwiseProduct(parts.c)) + 0.5 * (sws.transpose().cwiseProduct(sws)).sum();
  f(k, k + 1) = 0.5 * (sws.transpose().cwiseProduct(sms)).sum();
  f(k + 1, k + 1) = 0.5 * (sms.transpose().cwiseProduct(sms)).sum();
  f.block(k, 0, 1, k) = f.block(0, k, k, 1).transpose();
  f(k + 1, k) = f(k, k + 1);
  f /= n;

  Mat d_inv = d.ldlt().solve(Mat::Identity(k + 2, k + 2));
  if (!d_inv.allFinite()) throw std::runtime_error("vcov_hetero: singular D matrix");
  return (d_inv * f * d_inv) / n;
}

std::pair<bool, double> check_commute(const WeightsMatrix& w, const WeightsMatrix& m, double tol) {
  SpMat diff = SpMat(w.mat * m.mat) - SpMat(m.mat * w.mat);
  double norm = 0.0;
  for (int i = 0; i < diff.outerSize(); ++i) {
    double s = 0.0;
    for (SpMat::InnerIterator it(diff, i); it; ++it) s += std::fabs(it.value());
    norm = std::max(norm, s);
  }
  return {norm <= tol, norm};
}

}  // namespace mess
