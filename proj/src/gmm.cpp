#include "mess/gmm.hpp"

#include <cmath>
#include <stdexcept>

#include "mess/optim.hpp"

namespace mess {

void validate_moment_set(const MomentSet& ms) {
  const int n = static_cast<int>(ms.f.rows());
  for (const Mat& p : ms.p_list) {
    if (p.rows() != n || p.cols() != n) throw std::invalid_argument("MomentSet: P dimension mismatch");
    if (ms.diag_zero_required) {
      if (p.diagonal().cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("MomentSet: heteroskedastic mode requires zero-diagonal P");
    } else {
      if (std::fabs(p.trace()) > 1e-8 * std::max(1.0, p.cwiseAbs().maxCoeff() * n))
        throw std::invalid_argument("MomentSet: homoskedastic mode requires trace-zero P");
    }
  }
  Eigen::ColPivHouseholderQR<Mat> qr(ms.f);
  qr.setThreshold(1e-10);
  if (qr.rank() < ms.f.cols()) throw std::invalid_argument("MomentSet: instrument matrix is rank deficient");
}

Vec eval_moments(const MessData& data, const ParamVector& p, const MomentSet& ms) {
  validate_moment_set(ms);
  const Vec v = residuals(data, p);
  const int n = data.n();
  Vec g(ms.n_moments());
  for (int m = 0; m < ms.n_quad(); ++m) g[m] = v.dot(ms.p_list[m] * v) / n;
  g.tail(ms.n_lin()) = ms.f.transpose() * v / n;
  return g;
}

namespace {

double trace_prod(const Mat& a, const Mat& b) {
  // tr(a b) for general dense a, b
  return a.cwiseProduct(b.transpose()).sum();
}

struct GmmPieces {
  Mat ww;   // e^{rho M} W e^{-rho M}
  Mat xt;   // e^{rho M} X
  Vec c;    // e^{rho M} W X beta
};

GmmPieces gmm_pieces(const MessData& data, const ParamVector& p) {
  GmmPieces out;
  out.ww = conjugate_by_expm(data.m, p.rho, data.w.mat);
  out.xt = expm_action(data.m, p.rho, data.x);
  out.c = expm_action(data.m, p.rho, Vec(data.w.mat * (data.x * p.beta)));
  return out;
}

}  // namespace

Mat h_matrix(const MessData& data, const MomentSet& ms, const ParamVector& p, double sigma2, double mu3, double mu4) {
  (void)data;
  (void)p;
  const int kp = ms.n_quad(), kf = ms.n_lin();
  const int n = static_cast<int>(ms.f.rows());
  Mat h(kp + kf, kp + kf);
  const double excess = mu4 - 3.0 * sigma2 * sigma2;
  std::vector<Mat> ps(kp);
  for (int a = 0; a < kp; ++a) ps[a] = ms.p_list[a] + ms.p_list[a].transpose();
  for (int a = 0; a < kp; ++a) {
    for (int b = a; b < kp; ++b) {
      h(a, b) = 0.5 * sigma2 * sigma2 * trace_prod(ps[a], ps[b]) +
                excess * ms.p_list[a].diagonal().dot(ms.p_list[b].diagonal());
      h(b, a) = h(a, b);
    }
    h.block(a, kp, 1, kf) = mu3 * (ms.f.transpose() * ms.p_list[a].diagonal()).transpose();
    h.block(kp, a, kf, 1) = h.block(a, kp, 1, kf).transpose();
  }
  h.bottomRightCorner(kf, kf) = sigma2 * ms.f.transpose() * ms.f;
  return h / n;
}

Mat h_matrix_hetero(const MessData& data, const MomentSet& ms, const ParamVector& p, const Vec& sigma_diag) {
  (void)data;
  (void)p;
  const int kp = ms.n_quad(), kf = ms.n_lin();
  const int n = static_cast<int>(ms.f.rows());
  Mat h = Mat::Zero(kp + kf, kp + kf);
  std::vector<Mat> sps(kp);
  for (int a = 0; a < kp; ++a) sps[a] = sigma_diag.asDiagonal() * (ms.p_list[a] + ms.p_list[a].transpose());
  for (int a = 0; a < kp; ++a)
    for (int b = a; b < kp; ++b) {
      h(a, b) = 0.5 * trace_prod(sps[a], sps[b]);
      h(b, a) = h(a, b);
    }
  h.bottomRightCorner(kf, kf) = ms.f.transpose() * sigma_diag.asDiagonal() * ms.f;
  return h / n;
}

Mat g_matrix(const MessData& data, const MomentSet& ms, const ParamVector& p, double sigma2) {
  const int kp = ms.n_quad(), kf = ms.n_lin(), k = data.k();
  const int n = data.n();
  const GmmPieces pieces = gmm_pieces(data, p);
  const Mat m_dense = Mat(data.m.mat);
  Mat g = Mat::Zero(kp + kf, k + 2);
  for (int a = 0; a < kp; ++a) {
    const Mat ps = ms.p_list[a] + ms.p_list[a].transpose();
    g(a, k) = sigma2 * trace_prod(ps, pieces.ww);
    g(a, k + 1) = sigma2 * trace_prod(ps, m_dense);
  }
  g.block(kp, 0, kf, k) = -ms.f.transpose() * pieces.xt;
  g.block(kp, k, kf, 1) = ms.f.transpose() * pieces.c;
  return g / n;
}

Mat g_matrix_hetero(const MessData& data, const MomentSet& ms, const ParamVector& p, const Vec& sigma_diag) {
  const int kp = ms.n_quad(), kf = ms.n_lin(), k = data.k();
  const int n = data.n();
  const GmmPieces pieces = gmm_pieces(data, p);
  const Mat sig_ww = pieces.ww * sigma_diag.asDiagonal();
  const Mat sig_m = Mat(data.m.mat) * sigma_diag.asDiagonal();
  Mat g = Mat::Zero(kp + kf, k + 2);
  for (int a = 0; a < kp; ++a) {
    const Mat ps = ms.p_list[a] + ms.p_list[a].transpose();
    g(a, k) = trace_prod(ps, sig_ww);
    g(a, k + 1) = trace_prod(ps, sig_m);
  }
  g.block(kp, 0, kf, k) = -ms.f.transpose() * pieces.xt;
  g.block(kp, k, kf, 1) = ms.f.transpose() * pieces.c;
  return g / n;
}

namespace {

GmmFit run_gmm(const MessData& data, const MomentSet& ms, const Mat& phi, const GmmOptions& opts, bool ridge_flag) {
  validate_moment_set(ms);
  const int k = data.k();
  ParamVector start;
  if (opts.start) {
    start = *opts.start;
  } else {
    QmleOptions qo;
    qo.c_bound = opts.c_bound;
    qo.variance = VarianceKind::none;
    start = fit_qmle(data, qo).params;
  }

  const double wnorm = std::max({inf_norm(data.w), inf_norm(data.m), 1e-8});
  const int q = truncation_order(opts.c_bound * wnorm, 1e-11, 40);
  const ExpBasis basis = precompute_bases(data.w, data.m, data.y, data.x, q);
  const int n = data.n();

  auto moments_at = [&](const Vec& gamma) {
    const Mat xt = basis.rho_x(gamma[k + 1]);
    const Vec v = basis.pair_action(gamma[k], gamma[k + 1]) - xt * gamma.head(k);
    Vec g(ms.n_moments());
    for (int m = 0; m < ms.n_quad(); ++m) g[m] = v.dot(ms.p_list[m] * v) / n;
    g.tail(ms.n_lin()) = ms.f.transpose() * v / n;
    return g;
  };
  auto objective = [&](const Vec& gamma) {
    const Vec g = moments_at(gamma);
    return g.dot(phi * g);
  };

  Vec gamma0(k + 2);
  gamma0.head(k) = start.beta;
  gamma0[k] = start.lambda;
  gamma0[k + 1] = start.rho;

  NelderMeadOptions nm;
  nm.max_iter = opts.nm_max_iter;
  nm.initial_step = 0.25;
  nm.lower = Vec::Constant(k + 2, -std::numeric_limits<double>::infinity());
  nm.upper = Vec::Constant(k + 2, std::numeric_limits<double>::infinity());
  nm.lower.tail(2).setConstant(-opts.c_bound);
  nm.upper.tail(2).setConstant(opts.c_bound);

  NelderMeadResult r = nelder_mead(objective, gamma0, nm);
  // one restart from the incumbent tightens the simplex
  NelderMeadOptions nm2 = nm;
  nm2.initial_step = 0.02;
  NelderMeadResult r2 = nelder_mead(objective, r.x, nm2);
  if (r2.value < r.value) r = r2;

  GmmFit fit;
  fit.params.beta = r.x.head(k);
  fit.params.lambda = r.x[k];
  fit.params.rho = r.x[k + 1];
  const Vec v = residuals(data, fit.params);
  fit.params.sigma2 = v.squaredNorm() / n;
  fit.objective = r.value;
  fit.converged = r.converged;
  fit.iterations = r.iterations;
  fit.weighting = phi;
  fit.ridge_flagged = ridge_flag;
  fit.moment_description = ms.description;

  // sandwich at the plug-ins implied by the final residuals
  const double mu3 = v.array().cube().mean();
  const double mu4 = v.array().pow(4).mean();
  const Vec sig = v.array().square();
  const Mat h = opts.heteroskedastic ? h_matrix_hetero(data, ms, fit.params, sig)
                                     : h_matrix(data, ms, fit.params, fit.params.sigma2, mu3, mu4);
  const Mat g = opts.heteroskedastic ? g_matrix_hetero(data, ms, fit.params, sig)
                                     : g_matrix(data, ms, fit.params, fit.params.sigma2);
  const Mat gpg = g.transpose() * phi * g;
  const Mat gpg_inv = gpg.fullPivLu().inverse();
  fit.vcov = gpg_inv * g.transpose() * phi * h * phi * g * gpg_inv / n;
  return fit;
}

}  // namespace

GmmFit fit_igmme(const MessData& data, const MomentSet& ms, const Mat& phi, const GmmOptions& opts) {
  if (phi.rows() != ms.n_moments() || phi.cols() != ms.n_moments())
    throw std::invalid_argument("fit_igmme: weighting dimension mismatch");
  Eigen::ColPivHouseholderQR<Mat> qr(phi);
  if (qr.rank() < data.k() + 2) throw std::invalid_argument("fit_igmme: weighting rank below parameter count");
  return run_gmm(data, ms, phi, opts, false);
}

GmmFit fit_optimal(const MessData& data, const MomentSet& ms, const GmmFit& initial, const GmmOptions& opts) {
  const Vec v = residuals(data, initial.params);
  const double sigma2 = v.squaredNorm() / data.n();
  const double mu3 = v.array().cube().mean();
  const double mu4 = v.array().pow(4).mean();
  const Vec sig = v.array().square();
  Mat h = opts.heteroskedastic ? h_matrix_hetero(data, ms, initial.params, sig)
                               : h_matrix(data, ms, initial.params, sigma2, mu3, mu4);
  bool ridge = false;
  Eigen::LDLT<Mat> ldlt(h);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() < 1e-14 * ldlt.vectorD().maxCoeff()) {
    const double eps = 1e-10 * h.trace() / h.rows();
    h.diagonal().array() += eps;
    ldlt.compute(h);
    ridge = true;
  }
  const Mat phi = ldlt.solve(Mat::Identity(h.rows(), h.cols()));
  GmmOptions inner = opts;
  if (!inner.start) inner.start = initial.params;
  GmmFit fit = run_gmm(data, ms, phi, inner, ridge);
  // optimal-weighting variance (G' H^{-1} G)^{-1} / n at final plug-ins
  const Vec vf = residuals(data, fit.params);
  const double s2f = vf.squaredNorm() / data.n();
  const Vec sigf = vf.array().square();
  const Mat hf = opts.heteroskedastic ? h_matrix_hetero(data, ms, fit.params, sigf)
                                      : h_matrix(data, ms, fit.params, s2f, vf.array().cube().mean(),
                                                 vf.array().pow(4).mean());
  const Mat gf = opts.heteroskedastic ? g_matrix_hetero(data, ms, fit.params, sigf)
                                      : g_matrix(data, ms, fit.params, s2f);
  Mat hf_r = hf;
  Eigen::LDLT<Mat> ldlt_f(hf_r);
  if (ldlt_f.info() != Eigen::Success || !ldlt_f.isPositive() ||
      ldlt_f.vectorD().minCoeff() < 1e-14 * ldlt_f.vectorD().maxCoeff()) {
    hf_r.diagonal().array() += 1e-10 * hf_r.trace() / hf_r.rows();
    ldlt_f.compute(hf_r);
    fit.ridge_flagged = true;
  }
  fit.vcov = (gf.transpose() * ldlt_f.solve(gf)).fullPivLu().inverse() / data.n();
  return fit;
}

Mat independent_columns(const Mat& m) {
  Eigen::ColPivHouseholderQR<Mat> qr(m);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  std::vector<int> keep(qr.colsPermutation().indices().data(),
                        qr.colsPermutation().indices().data() + rank);
  std::sort(keep.begin(), keep.end());
  Mat out(m.rows(), rank);
  for (int i = 0; i < rank; ++i) out.col(i) = m.col(keep[i]);
  return out;
}

MomentSet default_moment_set(const MessData& data, bool diag_zero_required) {
  MomentSet ms;
  ms.p_list = {Mat(data.w.mat), Mat(data.m.mat)};
  Mat stack(data.n(), 4 * data.k());
  stack.leftCols(data.k()) = data.x;
  stack.middleCols(data.k(), data.k()) = data.w.mat * data.x;
  stack.middleCols(2 * data.k(), data.k()) = data.w.mat * (data.w.mat * data.x);
  stack.rightCols(data.k()) = data.m.mat * data.x;
  ms.f = independent_columns(stack);
  ms.diag_zero_required = diag_zero_required;
  ms.description = "P={W,M}; F=indep[X,WX,W2X,MX]";
  return ms;
}

namespace {

bool has_constant_column(const Mat& x, int* index) {
  for (int j = 0; j < x.cols(); ++j) {
    if ((x.col(j).array() - x(0, j)).abs().maxCoeff() < 1e-12) {
      *index = j;
      return true;
    }
  }
  return false;
}

Mat centered(const Mat& a) {
  Mat out = a;
  out.diagonal().array() -= a.trace() / a.rows();
  return out;
}

}  // namespace

MomentSet best_moment_set(const MessData& data, const ParamVector& initial) {
  const int n = data.n();
  MomentSet ms;
  const Mat ww = conjugate_by_expm(data.m, initial.rho, data.w.mat);
  const Vec wxb = expm_action(data.m, initial.rho, Vec(data.w.mat * (data.x * initial.beta)));
  const Mat xt = expm_action(data.m, initial.rho, data.x);

  ms.p_list.push_back(centered(ww));
  ms.p_list.push_back(centered(Mat(ww.diagonal().asDiagonal())));
  ms.p_list.push_back(centered(Mat(wxb.asDiagonal())));
  ms.p_list.push_back(Mat(data.m.mat));

  // X* drops the intercept when M is row-normalized (e^{rho M} of a constant
  // column is itself constant and would duplicate the l instrument).
  int const_col = -1;
  const bool drop = data.m.row_normalized && has_constant_column(data.x, &const_col);
  for (int j = 0; j < data.k(); ++j) {
    if (drop && j == const_col) continue;
    ms.p_list.push_back(centered(Mat(Vec(xt.col(j)).asDiagonal())));
  }

  Mat f(n, (drop ? data.k() - 1 : data.k()) + 3);
  int col = 0;
  for (int j = 0; j < data.k(); ++j) {
    if (drop && j == const_col) continue;
    f.col(col++) = xt.col(j);
  }
  f.col(col++) = wxb;
  f.col(col++) = Vec::Ones(n);
  f.col(col++) = ww.diagonal();
  ms.f = independent_columns(f);
  ms.diag_zero_required = false;
  ms.description = "best homoskedastic set at initial estimates";
  return ms;
}

MomentSet robust_moment_set(const MessData& data, const ParamVector& initial) {
  MomentSet ms;
  Mat ww = conjugate_by_expm(data.m, initial.rho, data.w.mat);
  ww.diagonal().setZero();
  ms.p_list.push_back(std::move(ww));
  ms.p_list.push_back(Mat(data.m.mat));
  const Mat xt = expm_action(data.m, initial.rho, data.x);
  const Vec wxb = expm_action(data.m, initial.rho, Vec(data.w.mat * (data.x * initial.beta)));
  Mat f(data.n(), data.k() + 1);
  f.col(0) = wxb;
  f.rightCols(data.k()) = xt;
  ms.f = independent_columns(f);
  ms.diag_zero_required = true;
  ms.description = "robust heteroskedastic set at initial estimates";
  return ms;
}

}  // namespace mess
