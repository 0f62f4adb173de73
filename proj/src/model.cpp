#include "mess/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mess/rng.hpp"

namespace mess {

MessData::MessData(Vec y_, Mat x_, WeightsMatrix w_, WeightsMatrix m_)
    : y(std::move(y_)), x(std::move(x_)), w(std::move(w_)), m(std::move(m_)) {
  const int nn = static_cast<int>(y.size());
  if (x.rows() != nn || w.n != nn || m.n != nn) throw std::invalid_argument("MessData: non-conforming dimensions");
  Eigen::ColPivHouseholderQR<Mat> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) throw std::invalid_argument("MessData: X is numerically rank deficient");
}

DisturbanceScheme DisturbanceScheme::hetero_neighbors(const std::vector<int>& neighbor_counts) {
  const int n = static_cast<int>(neighbor_counts.size());
  double mean = 0.0;
  for (int c : neighbor_counts) mean += c;
  mean /= n;
  DisturbanceScheme s{Tag::hetero_neighbors, Vec(n)};
  for (int i = 0; i < n; ++i) s.variances[i] = 2.0 * neighbor_counts[i] / mean;
  return s;
}

DisturbanceScheme DisturbanceScheme::hetero_exp_x2(const Mat& x) {
  if (x.cols() < 2) throw std::invalid_argument("hetero_exp_x2: design needs a second column");
  DisturbanceScheme s{Tag::hetero_exp_x2, Vec(x.rows())};
  for (int i = 0; i < x.rows(); ++i) s.variances[i] = std::exp(0.1 + 0.35 * x(i, 1));
  return s;
}

Vec residuals(const MessData& data, const ParamVector& p) {
  if (p.beta.size() != data.k()) throw std::invalid_argument("residuals: beta dimension mismatch");
  Vec inner = expm_action(data.w, p.lambda, data.y) - data.x * p.beta;
  return expm_action(data.m, p.rho, inner);
}

Mat make_design(int n, std::uint64_t seed) {
  Mat x(n, 2);
  const double sqrt12 = std::sqrt(12.0);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = StreamRng::keyed(seed, 0, i).normal();
    x(i, 1) = sqrt12 * StreamRng::keyed(seed, 1, i).uniform();
  }
  return x;
}

Vec draw_disturbance(const DisturbanceScheme& scheme, int n, std::uint64_t seed) {
  using Tag = DisturbanceScheme::Tag;
  if ((scheme.tag == Tag::hetero_neighbors || scheme.tag == Tag::hetero_exp_x2) && scheme.variances.size() != n)
    throw std::invalid_argument("draw_disturbance: variance vector does not match n");
  Vec v(n);
  const double inv_sqrt6 = 1.0 / std::sqrt(6.0);
  for (int i = 0; i < n; ++i) {
    StreamRng rng = StreamRng::keyed(seed, 2, i);
    switch (scheme.tag) {
      case Tag::iid_normal:
        v[i] = rng.normal();
        break;
      case Tag::std_chisq3:
        v[i] = (rng.chisq(3) - 3.0) * inv_sqrt6;
        break;
      case Tag::hetero_neighbors:
      case Tag::hetero_exp_x2:
        v[i] = std::sqrt(scheme.variances[i]) * rng.normal();
        break;
    }
  }
  return v;
}

MessData simulate(const WeightsMatrix& w, const WeightsMatrix& m, const Mat& x, const Vec& beta0, double lambda0,
                  double rho0, const DisturbanceScheme& scheme, std::uint64_t seed) {
  const int n = w.n;
  if (m.n != n || x.rows() != n || beta0.size() != x.cols()) throw std::invalid_argument("simulate: non-conforming inputs");
  const Vec v = draw_disturbance(scheme, n, seed);
  Vec u = expm_action(m, -rho0, v);
  Vec y = expm_action(w, -lambda0, Vec(x * beta0 + u));
  return MessData(std::move(y), x, w, m);
}

void write_observations(const MessData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_observations: cannot open " + path);
  out.precision(17);
  for (int i = 0; i < data.n(); ++i) {
    out << data.y[i];
    for (int j = 0; j < data.k(); ++j) out << "," << data.x(i, j);
    out << "\n";
  }
}

void read_observations(const std::string& path, Vec& y, Mat& x) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_observations: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<double> row;
    double val;
    while (ss >> val) row.push_back(val);
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("read_observations: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().size() < 2) throw std::runtime_error("read_observations: need Y plus regressors");
  const int n = static_cast<int>(rows.size());
  const int k = static_cast<int>(rows.front().size()) - 1;
  y.resize(n);
  x.resize(n, k);
  for (int i = 0; i < n; ++i) {
    y[i] = rows[i][0];
    for (int j = 0; j < k; ++j) x(i, j) = rows[i][j + 1];
  }
}

}  // namespace mess
