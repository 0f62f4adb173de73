#pragma once

#include <complex>
#include <string>
#include <vector>

#include "mess/bayes.hpp"
#include "mess/types.hpp"
#include "mess/weights.hpp"

namespace mess {

struct ImpactSummary {
  double adi = 0.0, aii = 0.0, ati = 0.0;
  double se_adi = 0.0, se_aii = 0.0, se_ati = 0.0;
  std::string method;  // "delta" or "posterior"
};

struct ImpactPoint {
  double adi = 0.0, aii = 0.0, ati = 0.0;
  double trace_se = 0.0;  // probe standard error when the trace is estimated
};

// Repeated-impact helper: traces of e^{a W} come from the spectrum of W for
// n <= 2000 (exact) and from 64 fixed Rademacher probes above; bilinear forms
// use truncated actions. Build once per weights matrix, evaluate per draw.
class ImpactEvaluator {
 public:
  explicit ImpactEvaluator(const WeightsMatrix& w);

  double trace_expm(double a) const;                    // tr(e^{a W})
  double trace_expm_w(double a) const;                  // tr(e^{a W} W)
  double trace_probe_se() const { return probe_se_; }   // last stochastic-trace SE

  ImpactPoint point(double lambda, double beta_k) const;
  ImpactSummary se_delta(double lambda, double beta_k, const Mat& cov_lambda_beta) const;
  ImpactSummary posterior(const Chain& chain, int k) const;

  const WeightsMatrix& weights() const { return *w_; }

 private:
  const WeightsMatrix* w_;
  int n_ = 0;
  bool exact_ = true;
  std::vector<std::complex<double>> eigs_;
  Mat probes_;
  mutable double probe_se_ = 0.0;
};

// One-shot wrappers.
ImpactPoint impact_point(double lambda, double beta_k, const WeightsMatrix& w);
ImpactSummary impact_se_delta(double lambda, double beta_k, const Mat& cov_lambda_beta, const WeightsMatrix& w);
ImpactSummary impact_posterior(const Chain& chain, const WeightsMatrix& w, int k);

}  // namespace mess
