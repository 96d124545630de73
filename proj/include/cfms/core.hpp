#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfms/linalg.hpp"

namespace cfms {

// ---------------------------------------------------------------------------
// Domain types for the normal linear factor model y = Lambda f + e with
// f ~ N(0, Phi), e ~ N(0, Psi diagonal). Values are immutable after
// construction and safe to share across threads.
// ---------------------------------------------------------------------------

struct Dataset {
  Matrix values;                        // n x p, rows are observations
  std::vector<std::string> item_names;  // length p
  bool standardized = false;

  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(values.cols()); }
  void validate() const;
};

enum class CellKind : uint8_t { Free, FixedZero, FixedValue, PositiveAnchor };

struct Cell {
  CellKind kind = CellKind::Free;
  double value = 0.0;  // meaningful for FixedValue only
};

// Per-cell status of the loading matrix. PositiveAnchor cells are free cells
// carrying the sign restriction lambda > 0 that removes column reflection.
class PatternMatrix {
 public:
  PatternMatrix() = default;
  PatternMatrix(int p, int m) : p_(p), m_(m), cells_(static_cast<size_t>(p * m)) {}

  static PatternMatrix all_free(int p, int m);
  // EFA pattern used for dimensionality runs: all cells free, cell (j, j)
  // anchored for each column j. No exclusion restrictions.
  static PatternMatrix efa_echelon(int p, int m);

  int p() const { return p_; }
  int m() const { return m_; }

  const Cell& at(int i, int j) const { return cells_[static_cast<size_t>(i * m_ + j)]; }
  Cell& at(int i, int j) { return cells_[static_cast<size_t>(i * m_ + j)]; }

  bool is_free(int i, int j) const {
    const CellKind k = at(i, j).kind;
    return k == CellKind::Free || k == CellKind::PositiveAnchor;
  }
  bool is_anchor(int i, int j) const { return at(i, j).kind == CellKind::PositiveAnchor; }
  double fixed_value(int i, int j) const {
    return at(i, j).kind == CellKind::FixedValue ? at(i, j).value : 0.0;
  }

  std::vector<int> free_rows_of_column(int j) const;
  std::vector<int> zero_rows_of_column(int j) const;
  std::vector<int> anchor_rows_of_column(int j) const;
  int free_cell_count() const;

  // Writes fixed cells into a loading matrix, leaving free cells untouched.
  void impose_fixed(Matrix& loadings) const;
  // True when every fixed cell matches and every anchor is strictly positive.
  bool admits(const Matrix& loadings, double tol = 0.0) const;

  // Stable byte serialization, used for content-addressed seeding.
  std::string fingerprint() const;

  bool operator==(const PatternMatrix& other) const;

  void validate() const;

 private:
  int p_ = 0;
  int m_ = 0;
  std::vector<Cell> cells_;
};

struct FactorModel {
  Matrix loadings;             // p x m
  Vector unique_variances;     // length p, strictly positive
  Matrix factor_correlations;  // m x m correlation matrix

  int p() const { return static_cast<int>(loadings.rows()); }
  int m() const { return static_cast<int>(loadings.cols()); }
  void validate() const;
};

struct TrueModelSpec {
  FactorModel model;
  int n = 0;
  uint64_t seed = 0;
  void validate() const;
};

// Sigma = Lambda Phi Lambda^T + Psi, symmetrized after computation.
Matrix implied_covariance(const FactorModel& model);

// Sum over rows of log N(y_i; 0, Sigma). Throws numeric_error when the
// implied covariance is not positive definite.
double log_likelihood(const Dataset& data, const FactorModel& model);

// Same likelihood from sufficient statistics: scatter = sum_i y_i y_i^T.
double log_likelihood_scatter(const Matrix& scatter, int n, const Matrix& sigma);

// Column-wise centering and scaling with the n-1 variance divisor.
Dataset standardize(const Dataset& data);

// n iid draws from N(0, implied_covariance(spec)), deterministic per seed.
Dataset generate_synthetic(const TrueModelSpec& spec);

}  // namespace cfms
