#include "mess/expm.hpp"

#include <cmath>
#include <stdexcept>

namespace mess {

namespace {

template <typename Op>
Mat series_action(const Op& apply, int n_rows, double a, const Mat& v, const TruncationPolicy& policy) {
  if (v.rows() != n_rows) throw std::invalid_argument("expm_action: non-conforming dimensions");
  if (policy.q_max < 1 || policy.tol <= 0.0) throw std::invalid_argument("expm_action: bad truncation policy");
  Mat sum = v;
  if (a == 0.0) return sum;
  Mat term = v;
  for (int i = 1; i <= policy.q_max; ++i) {
    term = apply(term);
    term *= a / static_cast<double>(i);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < policy.tol) break;
  }
  return sum;
}

}  // namespace

Mat expm_action(const SpMat& a_mat, double a, const Mat& v, const TruncationPolicy& policy) {
  return series_action([&](const Mat& t) { return Mat(a_mat * t); }, static_cast<int>(a_mat.rows()), a, v, policy);
}

Vec expm_action(const SpMat& a_mat, double a, const Vec& v, const TruncationPolicy& policy) {
  return expm_action(a_mat, a, Mat(v), policy).col(0);
}

Mat expm_action_t(const SpMat& a_mat, double a, const Mat& v, const TruncationPolicy& policy) {
  return series_action([&](const Mat& t) { return Mat(a_mat.transpose() * t); }, static_cast<int>(a_mat.cols()), a, v,
                       policy);
}

int truncation_order(double c, double tol, int q_max) {
  if (c < 0.0) c = -c;
  double term = 1.0;  // c^{q+1}/(q+1)! running value
  const double scale = std::exp(c);
  for (int q = 0; q <= q_max; ++q) {
    term *= c / static_cast<double>(q + 1);
    if (scale * term < tol) return std::max(1, q);
  }
  return q_max;
}

ExpBasis precompute_bases(const WeightsMatrix& w, const WeightsMatrix& m, const Vec& y, const Mat& x, int q) {
  const int n = w.n;
  if (m.n != n || y.size() != n || x.rows() != n)
    throw std::invalid_argument("precompute_bases: non-conforming dimensions");
  if (q < 0) throw std::invalid_argument("precompute_bases: q must be nonnegative");
  ExpBasis b;
  b.n = n;
  b.q = q;
  b.k = static_cast<int>(x.cols());

  // Table t[i*(q+1)+j] = M^i W^j Y, filled row 0 by W-powers then upward by M.
  std::vector<Vec> table(static_cast<size_t>((q + 1) * (q + 1)));
  table[0] = y;
  for (int j = 1; j <= q; ++j) table[j] = w.mat * table[j - 1];
  for (int i = 1; i <= q; ++i)
    for (int j = 0; j <= q; ++j) table[static_cast<size_t>(i) * (q + 1) + j] = m.mat * table[static_cast<size_t>(i - 1) * (q + 1) + j];

  const int tri = q * (q + 1) / 2;
  b.y1.resize(n, std::max(tri, 1));
  b.y2.resize(n, std::max(tri, 1));
  b.d1.resize(std::max(tri, 1));
  b.y3.resize(n, q + 1);
  b.d3.resize(q + 1);
  if (tri == 0) {
    b.y1.setZero();
    b.y2.setZero();
    b.d1.setZero();
  }

  std::vector<double> factorial(static_cast<size_t>(q + 1), 1.0);
  for (int i = 1; i <= q; ++i) factorial[i] = factorial[i - 1] * i;

  int c = 0;
  for (int i = 1; i <= q; ++i) {
    for (int j = 0; j < i; ++j, ++c) {
      b.y1.col(c) = table[static_cast<size_t>(i) * (q + 1) + j];
      b.y2.col(c) = table[static_cast<size_t>(j) * (q + 1) + i];
      b.d1[c] = 1.0 / (factorial[i] * factorial[j]);
    }
  }
  b.d2 = b.d1;
  for (int i = 0; i <= q; ++i) {
    b.y3.col(i) = table[static_cast<size_t>(i) * (q + 1) + i];
    b.d3[i] = 1.0 / (factorial[i] * factorial[i]);
  }

  b.xb.resize(n, b.k * (q + 1));
  b.d4.resize(b.k * (q + 1));
  for (int col = 0; col < b.k; ++col) {
    b.xb.col(col * (q + 1)) = x.col(col);
    b.d4[col * (q + 1)] = 1.0;
    for (int i = 1; i <= q; ++i) {
      b.xb.col(col * (q + 1) + i) = m.mat * b.xb.col(col * (q + 1) + i - 1);
      b.d4[col * (q + 1) + i] = 1.0 / factorial[i];
    }
  }
  return b;
}

Vec ExpBasis::pair_action(double lambda, double rho) const {
  const int tri = q * (q + 1) / 2;
  Vec k3(q + 1);
  std::vector<double> lpow(static_cast<size_t>(q + 1)), rpow(static_cast<size_t>(q + 1));
  lpow[0] = rpow[0] = 1.0;
  for (int i = 1; i <= q; ++i) {
    lpow[i] = lpow[i - 1] * lambda;
    rpow[i] = rpow[i - 1] * rho;
  }
  for (int i = 0; i <= q; ++i) k3[i] = rpow[i] * lpow[i] * d3[i];
  Vec out = y3 * k3;
  if (tri > 0) {
    Vec k1(tri), k2(tri);
    int c = 0;
    for (int i = 1; i <= q; ++i)
      for (int j = 0; j < i; ++j, ++c) {
        k1[c] = rpow[i] * lpow[j] * d1[c];
        k2[c] = lpow[i] * rpow[j] * d2[c];
      }
    out += y1 * k1 + y2 * k2;
  }
  return out;
}

Mat ExpBasis::rho_x(double rho) const {
  Vec k4(k * (q + 1));
  double p = 1.0;
  std::vector<double> rpow(static_cast<size_t>(q + 1));
  for (int i = 0; i <= q; ++i) {
    rpow[i] = p;
    p *= rho;
  }
  for (int col = 0; col < k; ++col)
    for (int i = 0; i <= q; ++i) k4[col * (q + 1) + i] = rpow[i] * d4[col * (q + 1) + i];
  Mat out(n, k);
  for (int col = 0; col < k; ++col)
    out.col(col) = xb.middleCols(col * (q + 1), q + 1) * k4.segment(col * (q + 1), q + 1);
  return out;
}

Mat dense_expm(const Mat& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("dense_expm: matrix must be square");
  if (a.rows() > 2000) throw std::invalid_argument("dense_expm: size guard exceeded (n > 2000)");
  const int n = static_cast<int>(a.rows());
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  const double theta13 = 5.371920351148152;
  if (norm > theta13) s = static_cast<int>(std::ceil(std::log2(norm / theta13)));
  const Mat as = a / std::ldexp(1.0, s);

  static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
                             129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
                             1323241920.0,        40840800.0,          960960.0,           16380.0,
                             182.0,               1.0};
  const Mat eye = Mat::Identity(n, n);
  const Mat a2 = as * as;
  const Mat a4 = a2 * a2;
  const Mat a6 = a2 * a4;
  const Mat u = as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye);
  const Mat v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye;
  Mat f = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < s; ++i) f = f * f;
  return f;
}

}  // namespace mess
