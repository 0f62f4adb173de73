#pragma once

#include <cstdint>
#include <string>

#include "mess/expm.hpp"
#include "mess/types.hpp"
#include "mess/weights.hpp"

namespace mess {

// One MESS(1,1) problem: e^{lambda W} Y = X beta + U, e^{rho M} U = V.
struct MessData {
  Vec y;
  Mat x;
  WeightsMatrix w;
  WeightsMatrix m;

  MessData() = default;
  MessData(Vec y_, Mat x_, WeightsMatrix w_, WeightsMatrix m_);

  int n() const { return static_cast<int>(y.size()); }
  int k() const { return static_cast<int>(x.cols()); }
};

struct ParamVector {
  Vec beta;
  double lambda = 0.0;
  double rho = 0.0;
  double sigma2 = std::numeric_limits<double>::quiet_NaN();  // optional for heteroskedastic fits

  int dim() const { return static_cast<int>(beta.size()) + 2; }
};

struct DisturbanceScheme {
  enum class Tag { iid_normal, std_chisq3, hetero_neighbors, hetero_exp_x2 };
  Tag tag = Tag::iid_normal;
  Vec variances;  // per-unit variances for the heteroskedastic tags

  static DisturbanceScheme iid_normal() { return {Tag::iid_normal, Vec()}; }
  static DisturbanceScheme std_chisq3() { return {Tag::std_chisq3, Vec()}; }
  // gamma_i = 2 theta_i / mean(theta), theta = pre-normalization contiguity counts
  static DisturbanceScheme hetero_neighbors(const std::vector<int>& neighbor_counts);
  // gamma_i = exp(0.1 + 0.35 X_2i)
  static DisturbanceScheme hetero_exp_x2(const Mat& x);
};

// V(gamma) = e^{rho M}(e^{lambda W} Y - X beta)
Vec residuals(const MessData& data, const ParamVector& p);

// Design matrix of the simulation study: column 1 standard normal, column 2
// Uniform(0, sqrt(12)). Unit-level counter streams keyed by (seed, column, unit).
Mat make_design(int n, std::uint64_t seed);

// Disturbance draw as a pure function of (scheme, n, seed).
Vec draw_disturbance(const DisturbanceScheme& scheme, int n, std::uint64_t seed);

// Y = e^{-lambda0 W} X beta0 + e^{-lambda0 W} e^{-rho0 M} V
MessData simulate(const WeightsMatrix& w, const WeightsMatrix& m, const Mat& x, const Vec& beta0, double lambda0,
                  double rho0, const DisturbanceScheme& scheme, std::uint64_t seed);

// Delimited text round-trip for the observation bundle (Y first column, then X).
void write_observations(const MessData& data, const std::string& path);
void read_observations(const std::string& path, Vec& y, Mat& x);

}  // namespace mess
