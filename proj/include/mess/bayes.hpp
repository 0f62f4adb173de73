#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mess/model.hpp"
#include "mess/rng.hpp"
#include "mess/types.hpp"

namespace mess {

struct Priors {
  double mu_lambda = 0.0, v_lambda = 100.0;
  double mu_rho = 0.0, v_rho = 100.0;
  Vec mu_beta;   // defaults to zero
  Mat v_beta;    // defaults to 100 I
  double a = 0.01, b = 0.01;  // inverse-gamma shape/scale for sigma^2
  double nu_bar = 50.0;

  void validate(int k) const;
  Vec mu_beta_or_default(int k) const;
  Mat v_beta_or_default(int k) const;
};

struct GibbsOptions {
  double c_init = 0.2;        // starting random-walk scale
  int tune_interval = 50;     // burn-in adaptation cadence
  int nu_grid_size = 97;
  bool lambda_fixed = false;
  double lambda_value = 0.0;
  bool rho_fixed = false;
  double rho_value = 0.0;
};

struct Chain {
  Mat draws;                       // post-burn-in draws, one row per draw
  std::vector<std::string> names;  // column labels
  double acceptance_lambda = 0.0;
  double acceptance_rho = 0.0;
  double c_lambda = 0.0, c_rho = 0.0;  // frozen tuning constants
  int burn = 0;
  bool heteroskedastic = false;
  int n_units = 0;  // eta block width when heteroskedastic

  int column(const std::string& name) const;
};

// Random-walk Metropolis-Hastings step; returns the (possibly unchanged)
// value and whether the proposal was accepted.
std::pair<double, bool> rw_mh_step(double current, const std::function<double(double)>& log_kernel, double c_tune,
                                   StreamRng& rng);

// One nu draw by grid evaluation of p(nu | eta), normalized cumulative
// weights, inverse-CDF sampling. Log-scale with max subtraction.
double griddy_gibbs_nu(const Vec& eta, double nu_bar, int grid_size, StreamRng& rng);

Chain gibbs_homo(const MessData& data, const Priors& priors, int n_draws, int burn, std::uint64_t seed,
                 const GibbsOptions& opts = {});

Chain gibbs_hetero(const MessData& data, const Priors& priors, int n_draws, int burn, std::uint64_t seed,
                   const GibbsOptions& opts = {});

// Gaussian log likelihood of the homoskedastic model at theta.
double gaussian_loglik(const MessData& data, const ParamVector& p);

// Student-t integrated log likelihood of the heteroskedastic model (eta
// integrated out analytically).
double integrated_loglik(const MessData& data, const ParamVector& p, double nu);

// log p(lambda | Y, beta, rho, sigma2) up to a constant; the non-standard
// conditional kernel used by the MH step and the SDDR grid.
double log_lambda_kernel(const MessData& data, const Vec& beta, double rho, double sigma2, const Priors& priors,
                         double lambda);

void write_chain(const Chain& chain, const std::string& path);

}  // namespace mess
