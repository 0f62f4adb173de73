#include "mess/weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mess {

WeightsMatrix::WeightsMatrix(int n_, std::vector<Triplet> triplets, bool row_normalized_) {
  n = n_;
  row_normalized = row_normalized_;
  for (const auto& t : triplets) {
    if (t.row() < 0 || t.row() >= n || t.col() < 0 || t.col() >= n)
      throw std::invalid_argument("WeightsMatrix: triplet index out of range");
    if (t.row() == t.col() && t.value() != 0.0)
      throw std::invalid_argument("WeightsMatrix: nonzero diagonal entry");
    if (t.value() < 0.0) throw std::invalid_argument("WeightsMatrix: negative weight");
  }
  mat.resize(n, n);
  mat.setFromTriplets(triplets.begin(), triplets.end());
  mat.prune(0.0);
  mat.makeCompressed();
  if (row_normalized) {
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (SpMat::InnerIterator it(mat, i); it; ++it) s += it.value();
      if (s != 0.0 && std::fabs(s - 1.0) > 1e-12)
        throw std::invalid_argument("WeightsMatrix: row_normalized flag set but a row sum deviates from 1");
    }
  }
}

bool WeightsMatrix::operator==(const WeightsMatrix& other) const {
  if (n != other.n || row_normalized != other.row_normalized) return false;
  if (mat.nonZeros() != other.mat.nonZeros()) return false;
  for (int i = 0; i < n; ++i) {
    SpMat::InnerIterator a(mat, i), b(other.mat, i);
    for (; a && b; ++a, ++b) {
      if (a.col() != b.col() || a.value() != b.value()) return false;
    }
    if (a || b) return false;
  }
  return true;
}

std::vector<std::pair<double, double>> grid_coordinates(const GridSpec& spec) {
  if (spec.c_low < 1 || spec.c_low >= spec.c_high)
    throw std::invalid_argument("grid_coordinates: require 1 <= c_low < c_high");
  std::vector<std::pair<double, double>> coords;
  // Integer quadrants: union of (1<=x<=c_low, 1<=y<=c_high) and
  // (1<=x<=c_high, 1<=y<=c_low); the shared c_low-by-c_low corner enters once.
  for (int x = 1; x <= spec.c_low; ++x)
    for (int y = 1; y <= spec.c_high; ++y) coords.emplace_back(x, y);
  for (int x = spec.c_low + 1; x <= spec.c_high; ++x)
    for (int y = 1; y <= spec.c_low; ++y) coords.emplace_back(x, y);
  // Northeast quadrant: half-step coordinates in (c_low, c_high].
  const int steps = 2 * (spec.c_high - spec.c_low) - 1;
  for (int i = 0; i < steps; ++i)
    for (int j = 0; j < steps; ++j)
      coords.emplace_back(spec.c_low + 1.0 + 0.5 * i, spec.c_low + 1.0 + 0.5 * j);
  return coords;
}

namespace {

std::vector<Triplet> contiguity_triplets(const std::vector<std::pair<double, double>>& coords) {
  const int n = static_cast<int>(coords.size());
  std::vector<Triplet> trip;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dx = coords[i].first - coords[j].first;
      const double dy = coords[i].second - coords[j].second;
      if (dx * dx + dy * dy <= 1.0 + 1e-12) {
        trip.emplace_back(i, j, 1.0);
        trip.emplace_back(j, i, 1.0);
      }
    }
  }
  return trip;
}

}  // namespace

WeightsMatrix build_grid_contiguity(const GridSpec& spec) {
  const auto coords = grid_coordinates(spec);
  WeightsMatrix raw(static_cast<int>(coords.size()), contiguity_triplets(coords), false);
  return row_normalize(raw);
}

std::vector<int> grid_neighbor_counts(const GridSpec& spec) {
  const auto coords = grid_coordinates(spec);
  WeightsMatrix raw(static_cast<int>(coords.size()), contiguity_triplets(coords), false);
  std::vector<int> counts(coords.size(), 0);
  for (int i = 0; i < raw.n; ++i) {
    int c = 0;
    for (SpMat::InnerIterator it(raw.mat, i); it; ++it) ++c;
    counts[i] = c;
  }
  return counts;
}

WeightsMatrix build_knn(const std::vector<std::pair<double, double>>& coords, int k) {
  const int n = static_cast<int>(coords.size());
  if (k <= 0 || k >= n) throw std::invalid_argument("build_knn: require 0 < k < n");
  std::vector<Triplet> trip;
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double dx = coords[i].first - coords[j].first;
      const double dy = coords[i].second - coords[j].second;
      dist[j] = {dx * dx + dy * dy, j};
    }
    dist[i].first = std::numeric_limits<double>::infinity();
    // stable ordering: distance, then lower index
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int m = 0; m < k; ++m) trip.emplace_back(i, dist[m].second, 1.0);
  }
  WeightsMatrix raw(n, std::move(trip), false);
  return row_normalize(raw);
}

WeightsMatrix row_normalize(const WeightsMatrix& w) {
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(w.mat.nonZeros()));
  for (int i = 0; i < w.n; ++i) {
    double s = 0.0;
    for (SpMat::InnerIterator it(w.mat, i); it; ++it) s += it.value();
    for (SpMat::InnerIterator it(w.mat, i); it; ++it)
      trip.emplace_back(i, static_cast<int>(it.col()), s == 0.0 ? it.value() : it.value() / s);
  }
  return WeightsMatrix(w.n, std::move(trip), true);
}

double inf_norm(const WeightsMatrix& w) {
  double norm = 0.0;
  for (int i = 0; i < w.n; ++i) {
    double s = 0.0;
    for (SpMat::InnerIterator it(w.mat, i); it; ++it) s += std::fabs(it.value());
    norm = std::max(norm, s);
  }
  return norm;
}

NormsReport validate(const WeightsMatrix& w) {
  NormsReport rep;
  Vec colsum = Vec::Zero(w.n);
  for (int i = 0; i < w.n; ++i) {
    double rowsum = 0.0;
    for (SpMat::InnerIterator it(w.mat, i); it; ++it) {
      rowsum += std::fabs(it.value());
      colsum[it.col()] += std::fabs(it.value());
      if (it.col() == i) rep.max_abs_diag = std::max(rep.max_abs_diag, std::fabs(it.value()));
    }
    rep.row_sum_norm = std::max(rep.row_sum_norm, rowsum);
  }
  rep.col_sum_norm = colsum.size() > 0 ? colsum.maxCoeff() : 0.0;
  rep.diagonal_violation = rep.max_abs_diag != 0.0;
  return rep;
}

void write_matrix_market(const WeightsMatrix& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_matrix_market: cannot open " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << "%row_normalized " << (w.row_normalized ? 1 : 0) << "\n";
  out << w.n << " " << w.n << " " << w.mat.nonZeros() << "\n";
  out.precision(17);
  for (int i = 0; i < w.n; ++i)
    for (SpMat::InnerIterator it(w.mat, i); it; ++it)
      out << (i + 1) << " " << (it.col() + 1) << " " << it.value() << "\n";
}

WeightsMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_matrix_market: cannot open " + path);
  std::string line;
  bool row_normalized = false;
  long rows = -1, cols = -1, nnz = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '%') {
      if (line.rfind("%row_normalized", 0) == 0) row_normalized = line.back() == '1';
      continue;
    }
    std::istringstream hdr(line);
    hdr >> rows >> cols >> nnz;
    break;
  }
  if (rows < 0 || rows != cols) throw std::runtime_error("read_matrix_market: bad header in " + path);
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(nnz));
  long r, c;
  double v;
  while (in >> r >> c >> v) trip.emplace_back(static_cast<int>(r - 1), static_cast<int>(c - 1), v);
  if (static_cast<long>(trip.size()) != nnz) throw std::runtime_error("read_matrix_market: truncated file " + path);
  return WeightsMatrix(static_cast<int>(rows), std::move(trip), row_normalized);
}

void write_coordinates(const std::vector<std::pair<double, double>>& coords, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_coordinates: cannot open " + path);
  out.precision(17);
  for (const auto& c : coords) out << c.first << "," << c.second << "\n";
}

std::vector<std::pair<double, double>> read_coordinates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_coordinates: cannot open " + path);
  std::vector<std::pair<double, double>> coords;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double x, y;
    if (!(ss >> x >> y)) throw std::runtime_error("read_coordinates: malformed line in " + path);
    coords.emplace_back(x, y);
  }
  return coords;
}

}  // namespace mess
