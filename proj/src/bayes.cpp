#include "mess/bayes.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mess {

void Priors::validate(int k) const {
  if (v_lambda <= 0.0 || v_rho <= 0.0 || a <= 0.0 || b <= 0.0) throw std::invalid_argument("Priors: nonpositive scale");
  if (nu_bar <= 2.0) throw std::invalid_argument("Priors: nu_bar must exceed 2");
  if (mu_beta.size() != 0 && mu_beta.size() != k) throw std::invalid_argument("Priors: mu_beta dimension");
  if (v_beta.size() != 0 && (v_beta.rows() != k || v_beta.cols() != k))
    throw std::invalid_argument("Priors: V_beta dimension");
}

Vec Priors::mu_beta_or_default(int k) const { return mu_beta.size() == k ? mu_beta : Vec::Zero(k); }
Mat Priors::v_beta_or_default(int k) const { return v_beta.size() > 0 ? v_beta : Mat(100.0 * Mat::Identity(k, k)); }

int Chain::column(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("Chain: no column named " + name);
}

std::pair<double, bool> rw_mh_step(double current, const std::function<double(double)>& log_kernel, double c_tune,
                                   StreamRng& rng) {
  const double k_cur = log_kernel(current);
  if (!std::isfinite(k_cur)) throw std::invalid_argument("rw_mh_step: log kernel not finite at current value");
  const double proposal = current + c_tune * rng.normal();
  const double k_prop = log_kernel(proposal);
  const double log_u = std::log(rng.uniform());
  if (log_u < k_prop - k_cur) return {proposal, true};
  return {current, false};
}

double griddy_gibbs_nu(const Vec& eta, double nu_bar, int grid_size, StreamRng& rng) {
  if (grid_size < 2) throw std::invalid_argument("griddy_gibbs_nu: grid_size must be at least 2");
  const int n = static_cast<int>(eta.size());
  const double sum_log_eta = eta.array().log().sum();
  const double sum_inv_eta = eta.array().inverse().sum();

  Vec grid(grid_size), logp(grid_size);
  const double width = (nu_bar - 2.0) / grid_size;
  for (int i = 0; i < grid_size; ++i) {
    const double nu = 2.0 + (i + 0.5) * width;
    grid[i] = nu;
    logp[i] = 0.5 * n * nu * std::log(0.5 * nu) - n * std::lgamma(0.5 * nu) - (0.5 * nu + 1.0) * sum_log_eta -
              0.5 * nu * sum_inv_eta;
  }
  const double max_logp = logp.maxCoeff();
  Vec weights = (logp.array() - max_logp).exp();
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::runtime_error("griddy_gibbs_nu: grid weights underflow");
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (int i = 0; i < grid_size; ++i) {
    cumulative += weights[i] / total;
    if (cumulative >= u) return grid[i];
  }
  return grid[grid_size - 1];
}

double gaussian_loglik(const MessData& data, const ParamVector& p) {
  const int n = data.n();
  const Vec v = residuals(data, p);
  return -0.5 * n * std::log(2.0 * M_PI * p.sigma2) - 0.5 * v.squaredNorm() / p.sigma2;
}

double integrated_loglik(const MessData& data, const ParamVector& p, double nu) {
  if (nu <= 2.0) throw std::invalid_argument("integrated_loglik: nu must exceed 2");
  const int n = data.n();
  const Vec v = residuals(data, p);
  double tail = 0.0;
  for (int i = 0; i < n; ++i) tail += std::log(0.5 * nu + 0.5 * v[i] * v[i] / p.sigma2);
  return -0.5 * n * std::log(2.0 * M_PI) - 0.5 * n * std::log(p.sigma2) + 0.5 * n * nu * std::log(0.5 * nu) +
         n * std::lgamma(0.5 * (nu + 1.0)) - n * std::lgamma(0.5 * nu) - 0.5 * (nu + 1.0) * tail;
}

double log_lambda_kernel(const MessData& data, const Vec& beta, double rho, double sigma2, const Priors& priors,
                         double lambda) {
  ParamVector p;
  p.beta = beta;
  p.lambda = lambda;
  p.rho = rho;
  const Vec v = residuals(data, p);
  return -0.5 * (v.squaredNorm() / sigma2 + (lambda * lambda - 2.0 * priors.mu_lambda * lambda) / priors.v_lambda);
}

namespace {

struct GibbsState {
  Vec beta;
  double lambda = 0.0, rho = 0.0, sigma2 = 1.0;
  Vec eta;  // scale mixture variables (hetero only)
  double nu = 10.0;

  Vec z_lambda;  // e^{lambda W} Y
  Mat xt;        // e^{rho M} X
  Vec y_tilde;   // e^{rho M} z_lambda
};

struct Tuner {
  double c;
  int accepted = 0, attempted = 0;
  void record(bool acc) {
    ++attempted;
    if (acc) ++accepted;
  }
  // chase the [0.4, 0.6] band during burn-in
  void adapt() {
    if (attempted == 0) return;
    const double rate = static_cast<double>(accepted) / attempted;
    if (rate < 0.4) c /= 1.1;
    if (rate > 0.6) c *= 1.1;
    accepted = attempted = 0;
  }
};

Chain run_gibbs(const MessData& data, const Priors& priors, int n_draws, int burn, std::uint64_t seed,
                const GibbsOptions& opts, bool hetero) {
  const int n = data.n(), k = data.k();
  priors.validate(k);
  if (n_draws <= 0 || burn < 0) throw std::invalid_argument("gibbs: bad chain lengths");

  const Vec mu_b = priors.mu_beta_or_default(k);
  const Mat vb_inv = priors.v_beta_or_default(k).llt().solve(Mat::Identity(k, k));
  StreamRng rng = StreamRng::keyed(seed, hetero ? 11 : 10);

  GibbsState st;
  st.beta = Vec::Zero(k);
  st.lambda = opts.lambda_fixed ? opts.lambda_value : 0.0;
  st.rho = opts.rho_fixed ? opts.rho_value : 0.0;
  st.sigma2 = 1.0;
  st.eta = Vec::Ones(n);
  st.nu = 0.5 * (2.0 + priors.nu_bar);
  st.z_lambda = expm_action(data.w, st.lambda, data.y);
  st.xt = expm_action(data.m, st.rho, data.x);
  st.y_tilde = expm_action(data.m, st.rho, st.z_lambda);

  Tuner tune_lambda{opts.c_init}, tune_rho{opts.c_init};
  int post_acc_lambda = 0, post_att_lambda = 0, post_acc_rho = 0, post_att_rho = 0;

  const int p_base = k + 3;  // beta, lambda, rho, sigma2
  const int p_total = hetero ? p_base + 1 + n : p_base;
  Chain chain;
  chain.burn = burn;
  chain.heteroskedastic = hetero;
  chain.n_units = hetero ? n : 0;
  chain.draws.resize(n_draws, p_total);
  for (int j = 0; j < k; ++j) chain.names.push_back("beta_" + std::to_string(j));
  chain.names.insert(chain.names.end(), {"lambda", "rho", "sigma2"});
  if (hetero) {
    chain.names.push_back("nu");
    for (int i = 0; i < n; ++i) chain.names.push_back("eta_" + std::to_string(i));
  }

  auto ssr_weighted = [&](const Vec& resid) {
    if (!hetero) return resid.squaredNorm();
    return (resid.array().square() / st.eta.array()).sum();
  };

  for (int it = 0; it < burn + n_draws; ++it) {
    // beta
    {
      const Mat xth = hetero ? Mat(st.eta.cwiseInverse().asDiagonal() * st.xt) : st.xt;
      const Mat k_inv = vb_inv + st.xt.transpose() * xth / st.sigma2;
      const Eigen::LLT<Mat> llt(k_inv);
      const Vec mean = llt.solve(st.xt.transpose() * (hetero ? Vec(st.y_tilde.cwiseQuotient(st.eta)) : st.y_tilde) /
                                     st.sigma2 +
                                 vb_inv * mu_b);
      Vec z(k);
      for (int j = 0; j < k; ++j) z[j] = rng.normal();
      // K_beta = (k_inv)^{-1} = L^{-T} L^{-1}; draw = mean + L^{-T} z
      st.beta = mean + llt.matrixU().solve(z);
    }

    // sigma2
    {
      const Vec resid = st.y_tilde - st.xt * st.beta;
      st.sigma2 = rng.inverse_gamma(priors.a + 0.5 * n, priors.b + 0.5 * ssr_weighted(resid));
    }

    // lambda
    if (!opts.lambda_fixed) {
      auto kernel = [&](double lam) {
        const Vec z = expm_action(data.w, lam, data.y);
        const Vec resid = expm_action(data.m, st.rho, z) - st.xt * st.beta;
        return -0.5 * (ssr_weighted(resid) / st.sigma2 +
                       (lam * lam - 2.0 * priors.mu_lambda * lam) / priors.v_lambda);
      };
      const auto [val, acc] = rw_mh_step(st.lambda, kernel, tune_lambda.c, rng);
      tune_lambda.record(acc);
      if (it >= burn) {
        ++post_att_lambda;
        post_acc_lambda += acc ? 1 : 0;
      }
      if (acc) {
        st.lambda = val;
        st.z_lambda = expm_action(data.w, st.lambda, data.y);
        st.y_tilde = expm_action(data.m, st.rho, st.z_lambda);
      }
    }

    // rho (the likelihood keeps the eta weighting in the heteroskedastic model)
    if (!opts.rho_fixed) {
      auto kernel = [&](double rho) {
        const Vec resid = expm_action(data.m, rho, st.z_lambda) - expm_action(data.m, rho, data.x) * st.beta;
        return -0.5 * (ssr_weighted(resid) / st.sigma2 +
                       (rho * rho - 2.0 * priors.mu_rho * rho) / priors.v_rho);
      };
      const auto [val, acc] = rw_mh_step(st.rho, kernel, tune_rho.c, rng);
      tune_rho.record(acc);
      if (it >= burn) {
        ++post_att_rho;
        post_acc_rho += acc ? 1 : 0;
      }
      if (acc) {
        st.rho = val;
        st.xt = expm_action(data.m, st.rho, data.x);
        st.y_tilde = expm_action(data.m, st.rho, st.z_lambda);
      }
    }

    if (hetero) {
      const Vec resid = st.y_tilde - st.xt * st.beta;
      for (int i = 0; i < n; ++i)
        st.eta[i] = rng.inverse_gamma(0.5 * (st.nu + 1.0), 0.5 * st.nu + 0.5 * resid[i] * resid[i] / st.sigma2);
      st.nu = griddy_gibbs_nu(st.eta, priors.nu_bar, opts.nu_grid_size, rng);
    }

    if (it < burn) {
      if ((it + 1) % opts.tune_interval == 0) {
        tune_lambda.adapt();
        tune_rho.adapt();
      }
    } else {
      const int r = it - burn;
      chain.draws.block(r, 0, 1, k) = st.beta.transpose();
      chain.draws(r, k) = st.lambda;
      chain.draws(r, k + 1) = st.rho;
      chain.draws(r, k + 2) = st.sigma2;
      if (hetero) {
        chain.draws(r, k + 3) = st.nu;
        chain.draws.block(r, k + 4, 1, n) = st.eta.transpose();
      }
    }
  }

  chain.c_lambda = tune_lambda.c;
  chain.c_rho = tune_rho.c;
  chain.acceptance_lambda = post_att_lambda > 0 ? static_cast<double>(post_acc_lambda) / post_att_lambda : 0.0;
  chain.acceptance_rho = post_att_rho > 0 ? static_cast<double>(post_acc_rho) / post_att_rho : 0.0;
  return chain;
}

}  // namespace

Chain gibbs_homo(const MessData& data, const Priors& priors, int n_draws, int burn, std::uint64_t seed,
                 const GibbsOptions& opts) {
  return run_gibbs(data, priors, n_draws, burn, seed, opts, false);
}

Chain gibbs_hetero(const MessData& data, const Priors& priors, int n_draws, int burn, std::uint64_t seed,
                   const GibbsOptions& opts) {
  return run_gibbs(data, priors, n_draws, burn, seed, opts, true);
}

void write_chain(const Chain& chain, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_chain: cannot open " + path);
  out.precision(17);
  for (size_t j = 0; j < chain.names.size(); ++j) out << (j ? "," : "") << chain.names[j];
  out << "\n";
  for (int r = 0; r < chain.draws.rows(); ++r) {
    for (int j = 0; j < chain.draws.cols(); ++j) out << (j ? "," : "") << chain.draws(r, j);
    out << "\n";
  }
}

}  // namespace mess
