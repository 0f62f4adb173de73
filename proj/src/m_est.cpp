#include "mess/m_est.hpp"

#include <cmath>
#include <stdexcept>

#include "mess/optim.hpp"

namespace mess {

WdParts wd_matrix(const WeightsMatrix& w, const WeightsMatrix& m, double rho) {
  Mat ww = conjugate_by_expm(m, rho, w.mat);
  WdParts parts;
  parts.diag = ww.diagonal();
  ww.diagonal().setZero();
  parts.wd = std::move(ww);
  return parts;
}

Vec beta_m(const MessData& data, double lambda, double rho) {
  const Mat xt = expm_action(data.m, rho, data.x);
  const Vec yt = expm_action(data.m, rho, expm_action(data.w, lambda, data.y));
  Eigen::LLT<Mat> llt(xt.transpose() * xt);
  if (llt.info() != Eigen::Success) throw std::runtime_error("beta_m: rank-deficient regressor block");
  return llt.solve(xt.transpose() * yt);
}

namespace {

// Quantities shared by the score and Jacobian at a fixed gamma.
struct MEState {
  Vec xt_beta;   // e^{rho M} X beta
  Mat xt;        // e^{rho M} X
  Vec y_tilde;   // e^{rho M} e^{lambda W} Y
  Vec yz;        // e^{rho M} W e^{lambda W} Y
  Vec v;         // residuals
  Mat wd;        // WW_D(rho)
  Vec ww_diag;   // Diag(WW)
  Mat dot_wd;    // d WW_D / d rho
};

MEState me_state(const MessData& data, const ParamVector& p, bool need_dot) {
  MEState st;
  st.xt = expm_action(data.m, p.rho, data.x);
  const Vec ely = expm_action(data.w, p.lambda, data.y);
  st.y_tilde = expm_action(data.m, p.rho, ely);
  st.yz = expm_action(data.m, p.rho, Vec(data.w.mat * ely));
  st.xt_beta = st.xt * p.beta;
  st.v = st.y_tilde - st.xt_beta;
  WdParts parts = wd_matrix(data.w, data.m, p.rho);
  st.wd = std::move(parts.wd);
  st.ww_diag = std::move(parts.diag);
  if (need_dot) {
    // true derivative of WW_D(rho): off-diagonal part of M WW - WW M
    Mat ww = st.wd;
    ww.diagonal() = st.ww_diag;
    Mat comm = data.m.mat * ww - ww * Mat(data.m.mat);
    comm.diagonal().setZero();
    st.dot_wd = std::move(comm);
  }
  return st;
}

}  // namespace

Vec adjusted_score(const MessData& data, const ParamVector& p) {
  const int k = data.k();
  MEState st = me_state(data, p, false);
  Vec s(k + 2);
  s.head(k) = data.x.transpose() * expm_action_t(data.m, p.rho, st.v);
  s[k] = -st.y_tilde.dot(st.wd * st.v);
  s[k + 1] = -st.v.dot(data.m.mat * st.v);
  return s;
}

Vec concentrated_score(const MessData& data, double lambda, double rho) {
  ParamVector p;
  p.beta = beta_m(data, lambda, rho);
  p.lambda = lambda;
  p.rho = rho;
  const Vec full = adjusted_score(data, p);
  return full.tail(2);
}

Mat psi_matrix(const MessData& data, const ParamVector& p) {
  const int k = data.k();
  const int n = data.n();
  MEState st = me_state(data, p, true);
  const Vec msv = data.m.mat * st.v + data.m.mat.transpose() * st.v;
  const Vec m_ytilde = data.m.mat * st.y_tilde;
  const Vec mv = data.m.mat * st.v;

  Mat psi(k + 2, k + 2);
  psi.topLeftCorner(k, k) = st.xt.transpose() * st.xt;
  psi.block(0, k, k, 1) = -st.xt.transpose() * st.yz;
  psi.block(0, k + 1, k, 1) = -st.xt.transpose() * msv;
  psi.block(k, 0, 1, k) = -(st.wd.transpose() * st.y_tilde).transpose() * st.xt;
  psi(k, k) = st.yz.dot(st.wd * st.v) + st.y_tilde.dot(st.wd * st.yz);
  psi(k, k + 1) = m_ytilde.dot(st.wd * st.v) + st.y_tilde.dot(st.dot_wd * st.v) + st.y_tilde.dot(st.wd * mv);
  psi.block(k + 1, 0, 1, k) = psi.block(0, k + 1, k, 1).transpose();
  psi(k + 1, k) = st.yz.dot(msv);
  psi(k + 1, k + 1) = st.v.dot(data.m.mat * mv) + mv.dot(mv);
  psi /= n;
  return psi;
}

Mat omega_matrix(const MessData& data, const ParamVector& p, const Vec& sigma_diag) {
  const int k = data.k();
  const int n = data.n();
  if (sigma_diag.size() != n) throw std::invalid_argument("omega_matrix: sigma_diag size mismatch");
  MEState st = me_state(data, p, false);
  const Mat ms = Mat(data.m.mat) + Mat(data.m.mat.transpose());
  const Mat wd_s = st.wd + st.wd.transpose();

  Mat omega = Mat::Zero(k + 2, k + 2);
  omega.topLeftCorner(k, k) = st.xt.transpose() * sigma_diag.asDiagonal() * st.xt;
  const Vec wdt_xb = st.wd.transpose() * st.xt_beta;
  omega.block(0, k, k, 1) = -st.xt.transpose() * sigma_diag.cwiseProduct(wdt_xb);
  const Mat sig_wd = sigma_diag.asDiagonal() * st.wd;
  const Mat sig_wds = sigma_diag.asDiagonal() * wd_s;
  const Mat sig_ms = sigma_diag.asDiagonal() * ms;
  omega(k, k) = wdt_xb.dot(sigma_diag.cwiseProduct(wdt_xb)) + (sig_wd.transpose().cwiseProduct(sig_wds)).sum();
  omega(k, k + 1) = (sig_wd.transpose().cwiseProduct(sig_ms)).sum();
  omega(k + 1, k + 1) = (Mat(sigma_diag.asDiagonal() * Mat(data.m.mat)).transpose().cwiseProduct(sig_ms)).sum();
  omega.block(k, 0, 1, k) = omega.block(0, k, k, 1).transpose();
  omega(k + 1, k) = omega(k, k + 1);
  omega /= n;
  return omega;
}

MEFit fit_m(const MessData& data, const MEOptions& opts) {
  const int k = data.k();
  const int n = data.n();

  QmleOptions q_opts;
  q_opts.c_bound = opts.c_bound;
  q_opts.variance = VarianceKind::none;
  const QmleFit start = fit_qmle(data, q_opts);

  Vec zeta(2);
  zeta << start.params.lambda, start.params.rho;

  auto score_at = [&](const Vec& z, ParamVector& p_out) {
    p_out.beta = beta_m(data, z[0], z[1]);
    p_out.lambda = z[0];
    p_out.rho = z[1];
    return adjusted_score(data, p_out).tail(2).eval();
  };

  ParamVector p;
  Vec sc = score_at(zeta, p);
  double norm = sc.lpNorm<Eigen::Infinity>();
  int iterations = 0;
  bool stalled = false;
  for (int it = 0; it < opts.newton_max_iter && norm / n > opts.score_tol; ++it) {
    ++iterations;
    const Mat psi = psi_matrix(data, p);
    const Mat psi_bb = psi.topLeftCorner(k, k);
    const Mat psi_bz = psi.topRightCorner(k, 2);
    const Mat psi_zb = psi.bottomLeftCorner(2, k);
    const Mat psi_zz = psi.bottomRightCorner(2, 2);
    const Mat schur = psi_zz - psi_zb * psi_bb.llt().solve(psi_bz);
    // S^{c*} Jacobian is -n * schur
    Vec step = schur.fullPivLu().solve(sc / n);
    if (!step.allFinite()) {
      stalled = true;
      break;
    }
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < opts.max_halvings; ++half) {
      Vec trial = zeta + scale * step;
      trial = trial.cwiseMax(-opts.c_bound).cwiseMin(opts.c_bound);
      ParamVector p_trial;
      const Vec sc_trial = score_at(trial, p_trial);
      if (sc_trial.lpNorm<Eigen::Infinity>() < norm) {
        zeta = trial;
        sc = sc_trial;
        p = p_trial;
        norm = sc.lpNorm<Eigen::Infinity>();
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      stalled = true;
      break;
    }
  }

  if (stalled && norm / n > opts.score_tol) {
    // fallback: direct norm minimization
    NelderMeadOptions nm;
    nm.max_iter = 400;
    nm.lower = Vec::Constant(2, -opts.c_bound);
    nm.upper = Vec::Constant(2, opts.c_bound);
    auto obj = [&](const Vec& z) {
      ParamVector tmp;
      return score_at(z, tmp).squaredNorm();
    };
    const NelderMeadResult r = nelder_mead(obj, zeta, nm);
    iterations += r.iterations;
    if (obj(r.x) < sc.squaredNorm()) {
      zeta = r.x;
      sc = score_at(zeta, p);
      norm = sc.lpNorm<Eigen::Infinity>();
    }
  }

  MEFit fit;
  fit.params = p;
  fit.residuals = residuals(data, p);
  fit.score_norm = norm;
  fit.iterations = iterations;
  fit.converged = norm < 1e-6 * (1.0 + std::fabs(n));
  const Vec sigma_diag = fit.residuals.array().square();
  const Mat psi = psi_matrix(data, p);
  const Mat omega = omega_matrix(data, p, sigma_diag);
  const Mat psi_inv = psi.fullPivLu().inverse();
  fit.vcov = psi_inv * omega * psi_inv.transpose() / n;
  return fit;
}

std::vector<IdentDiagnostic> identification_diagnostics(const MessData& data, const ParamVector& fitted,
                                                        const Vec& sigma_diag,
                                                        const std::vector<double>& lambda_grid,
                                                        const std::vector<double>& rho_grid) {
  const int n = data.n();
  std::vector<IdentDiagnostic> out;
  const Mat eye = Mat::Identity(n, n);
  // A0 = G(zeta_hat)^{-1} = e^{-lambda_hat W} e^{-rho_hat M}
  const Mat g0_inv = expm_action(data.w, -fitted.lambda, expm_action(data.m, -fitted.rho, eye));
  const Vec mu_hat = expm_action(data.w, -fitted.lambda, Vec(data.x * fitted.beta));

  for (double lam : lambda_grid) {
    for (double rho : rho_grid) {
      const Mat xt = expm_action(data.m, rho, data.x);
      const Eigen::LLT<Mat> llt((xt.transpose() * xt).eval());
      const Mat a = expm_action(data.m, rho, expm_action(data.w, lam, g0_inv));
      const Vec b = expm_action(data.m, rho, expm_action(data.w, lam, mu_hat));
      const Vec qb = b - xt * llt.solve(xt.transpose() * b);
      const WdParts wd = wd_matrix(data.w, data.m, rho);

      IdentDiagnostic diag;
      diag.lambda = lam;
      diag.rho = rho;
      const Mat wda = wd.wd * a;
      const Mat ma = data.m.mat * a;
      // tr(Sigma A' B A) = sum_j sigma_j^2 * col_j(A) . col_j(B A)
      const Vec tr_l = (a.cwiseProduct(wda)).colwise().sum().transpose();
      const Vec tr_r = (a.cwiseProduct(ma)).colwise().sum().transpose();
      diag.cond_lambda = (qb.dot(wd.wd * qb) + tr_l.dot(sigma_diag)) / n;
      diag.cond_rho = (qb.dot(data.m.mat * qb) + tr_r.dot(sigma_diag)) / n;
      out.push_back(diag);
    }
  }
  return out;
}

}  // namespace mess
