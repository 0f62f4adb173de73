#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mess/types.hpp"

namespace mess {

// Sparse spatial weights matrix with an exactly-zero diagonal. Immutable
// after construction; entries are kept in compressed row-major order so that
// equality is bit-comparable.
struct WeightsMatrix {
  int n = 0;
  SpMat mat;                  // row-major, compressed, sorted
  bool row_normalized = false;

  WeightsMatrix() = default;
  WeightsMatrix(int n_, std::vector<Triplet> triplets, bool row_normalized_ = false);

  Eigen::Index nonzeros() const { return mat.nonZeros(); }
  Mat dense() const { return Mat(mat); }

  bool operator==(const WeightsMatrix& other) const;
};

struct GridSpec {
  int c_low = 0;   // lower integer bound
  int c_high = 0;  // upper integer bound
};

struct NormsReport {
  double row_sum_norm = 0.0;
  double col_sum_norm = 0.0;
  double max_abs_diag = 0.0;
  bool diagonal_violation = false;
};

// Units on a square grid: the northeast quadrant holds half-step coordinates
// in (c_low, c_high], the rest are the union of two integer boxes. Entries
// are 1 for distinct units within unit Euclidean distance; the result is
// row-normalized.
WeightsMatrix build_grid_contiguity(const GridSpec& spec);

// Coordinates of the grid layout above, in construction order.
std::vector<std::pair<double, double>> grid_coordinates(const GridSpec& spec);

// Pre-normalization contiguity counts (used by the neighbor-heteroskedastic
// disturbance scheme).
std::vector<int> grid_neighbor_counts(const GridSpec& spec);

// k nearest neighbors by Euclidean distance, ties broken by lower index,
// row-normalized.
WeightsMatrix build_knn(const std::vector<std::pair<double, double>>& coords, int k);

WeightsMatrix row_normalize(const WeightsMatrix& w);

NormsReport validate(const WeightsMatrix& w);

// Row-sum (infinity) norm.
double inf_norm(const WeightsMatrix& w);

// Matrix Market coordinate format round-trip.
void write_matrix_market(const WeightsMatrix& w, const std::string& path);
WeightsMatrix read_matrix_market(const std::string& path);

void write_coordinates(const std::vector<std::pair<double, double>>& coords, const std::string& path);
std::vector<std::pair<double, double>> read_coordinates(const std::string& path);

}  // namespace mess
