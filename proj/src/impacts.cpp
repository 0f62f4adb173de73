#include "mess/impacts.hpp"

#include <cmath>
#include <stdexcept>

#include "mess/expm.hpp"
#include "mess/rng.hpp"

namespace mess {

double expm_trace(const WeightsMatrix& w, double a, double* probe_se) {
  const int n = w.n;
  if (probe_se) *probe_se = 0.0;
  if (n <= 2000) {
    const Mat e = expm_action(w, a, Mat(Mat::Identity(n, n)));
    return e.trace();
  }
  // Hutchinson with 64 fixed Rademacher probes
  const int n_probes = 64;
  Mat probes(n, n_probes);
  for (int j = 0; j < n_probes; ++j) {
    StreamRng rng = StreamRng::keyed(0x9e3779b97f4a7c15ULL, 77, j);
    for (int i = 0; i < n; ++i) probes(i, j) = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  const Mat image = expm_action(w, a, probes);
  Vec estimates(n_probes);
  for (int j = 0; j < n_probes; ++j) estimates[j] = probes.col(j).dot(image.col(j));
  const double mean = estimates.mean();
  if (probe_se) {
    const double var = (estimates.array() - mean).square().sum() / (n_probes - 1);
    *probe_se = std::sqrt(var / n_probes);
  }
  return mean;
}

ImpactPoint impact_point(double lambda, double beta_k, const WeightsMatrix& w) {
  const int n = w.n;
  ImpactPoint out;
  double probe_se = 0.0;
  const double tr = expm_trace(w, -lambda, &probe_se);
  const Vec ones = Vec::Ones(n);
  const double total = ones.dot(expm_action(w, -lambda, ones));
  out.adi = beta_k * tr / n;
  out.ati = beta_k * total / n;
  out.aii = out.ati - out.adi;
  out.trace_se = std::fabs(beta_k) * probe_se / n;
  return out;
}

ImpactSummary impact_se_delta(double lambda, double beta_k, const Mat& cov_lambda_beta, const WeightsMatrix& w) {
  if (cov_lambda_beta.rows() != 2 || cov_lambda_beta.cols() != 2)
    throw std::invalid_argument("impact_se_delta: covariance must be 2x2 over (lambda, beta_k)");
  const int n = w.n;
  const Eigen::SelfAdjointEigenSolver<Mat> es(cov_lambda_beta);
  if (es.eigenvalues().minCoeff() < -1e-10 * std::fabs(es.eigenvalues().maxCoeff()))
    throw std::invalid_argument("impact_se_delta: covariance of (lambda, beta_k) is not PSD");

  const ImpactPoint pt = impact_point(lambda, beta_k, w);
  const Vec ones = Vec::Ones(n);
  // traces and bilinear forms of e^{-lambda W} W
  const Mat ew = expm_action(w, -lambda, Mat(Mat::Identity(n, n)));
  const double tr_eww = (ew * Mat(w.mat)).trace();
  const double lt_ew_l = ones.dot(ew * ones);
  const double lt_eww_l = ones.dot(ew * (w.mat * ones));
  const double tr_ew = ew.trace();

  Eigen::RowVector2d a1, a2;
  a1 << -beta_k * tr_eww / n, tr_ew / n;
  a2 << -beta_k * lt_eww_l / n, lt_ew_l / n;

  ImpactSummary s;
  s.adi = pt.adi;
  s.aii = pt.aii;
  s.ati = pt.ati;
  s.method = "delta";
  s.se_adi = std::sqrt((a1 * cov_lambda_beta * a1.transpose())(0, 0));
  s.se_ati = std::sqrt((a2 * cov_lambda_beta * a2.transpose())(0, 0));
  const Eigen::RowVector2d diff = a2 - a1;
  s.se_aii = std::sqrt((diff * cov_lambda_beta * diff.transpose())(0, 0));
  return s;
}

ImpactSummary impact_posterior(const Chain& chain, const WeightsMatrix& w, int k) {
  const int r = static_cast<int>(chain.draws.rows());
  if (r == 0) throw std::invalid_argument("impact_posterior: empty chain");
  const int lam_col = chain.column("lambda");
  const int beta_col = chain.column("beta_" + std::to_string(k));
  Vec adi(r), aii(r), ati(r);
  for (int i = 0; i < r; ++i) {
    const ImpactPoint pt = impact_point(chain.draws(i, lam_col), chain.draws(i, beta_col), w);
    adi[i] = pt.adi;
    aii[i] = pt.aii;
    ati[i] = pt.ati;
  }
  auto sd = [r](const Vec& v) {
    if (r < 2) return 0.0;
    return std::sqrt((v.array() - v.mean()).square().sum() / (r - 1));
  };
  ImpactSummary s;
  s.adi = adi.mean();
  s.aii = aii.mean();
  s.ati = ati.mean();
  s.se_adi = sd(adi);
  s.se_aii = sd(aii);
  s.se_ati = sd(ati);
  s.method = "posterior";
  return s;
}

}  // namespace mess
