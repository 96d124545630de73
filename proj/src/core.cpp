#include "cfms/core.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "cfms/kernels.hpp"
#include "cfms/rng.hpp"

namespace cfms {

void Dataset::validate() const {
  if (n() < 2) throw model_error("dataset needs at least 2 observations");
  if (p() < 1) throw model_error("dataset needs at least 1 item");
  if (item_names.size() != static_cast<size_t>(p())) throw model_error("item name count mismatch");
  if (!values.allFinite()) throw model_error("dataset contains non-finite entries");
  if (standardized) {
    for (int j = 0; j < p(); ++j) {
      const double* col = values.col(j).data();
      const double mean = kernels::sum(col, n()) / n();
      const double var = (kernels::ssq(col, n()) - n() * mean * mean) / (n() - 1);
      if (std::abs(mean) >= 1e-10 || std::abs(var - 1.0) >= 1e-8) {
        throw model_error("standardized flag set but column " + item_names[j] + " is not standardized");
      }
    }
  }
}

PatternMatrix PatternMatrix::all_free(int p, int m) { return PatternMatrix(p, m); }

PatternMatrix PatternMatrix::efa_echelon(int p, int m) {
  PatternMatrix pat(p, m);
  for (int j = 0; j < m && j < p; ++j) pat.at(j, j).kind = CellKind::PositiveAnchor;
  return pat;
}

std::vector<int> PatternMatrix::free_rows_of_column(int j) const {
  std::vector<int> rows;
  for (int i = 0; i < p_; ++i)
    if (is_free(i, j)) rows.push_back(i);
  return rows;
}

std::vector<int> PatternMatrix::zero_rows_of_column(int j) const {
  std::vector<int> rows;
  for (int i = 0; i < p_; ++i)
    if (at(i, j).kind == CellKind::FixedZero) rows.push_back(i);
  return rows;
}

std::vector<int> PatternMatrix::anchor_rows_of_column(int j) const {
  std::vector<int> rows;
  for (int i = 0; i < p_; ++i)
    if (is_anchor(i, j)) rows.push_back(i);
  return rows;
}

int PatternMatrix::free_cell_count() const {
  int c = 0;
  for (const Cell& cell : cells_)
    if (cell.kind == CellKind::Free || cell.kind == CellKind::PositiveAnchor) ++c;
  return c;
}

void PatternMatrix::impose_fixed(Matrix& loadings) const {
  for (int i = 0; i < p_; ++i) {
    for (int j = 0; j < m_; ++j) {
      const Cell& c = at(i, j);
      if (c.kind == CellKind::FixedZero) loadings(i, j) = 0.0;
      if (c.kind == CellKind::FixedValue) loadings(i, j) = c.value;
    }
  }
}

bool PatternMatrix::admits(const Matrix& loadings, double tol) const {
  for (int i = 0; i < p_; ++i) {
    for (int j = 0; j < m_; ++j) {
      const Cell& c = at(i, j);
      const double v = loadings(i, j);
      switch (c.kind) {
        case CellKind::FixedZero:
          if (std::abs(v) > tol) return false;
          break;
        case CellKind::FixedValue:
          if (std::abs(v - c.value) > tol) return false;
          break;
        case CellKind::PositiveAnchor:
          if (!(v > 0.0)) return false;
          break;
        case CellKind::Free:
          break;
      }
    }
  }
  return true;
}

std::string PatternMatrix::fingerprint() const {
  std::ostringstream os;
  os << "pattern:" << p_ << "x" << m_ << ";";
  for (const Cell& c : cells_) {
    switch (c.kind) {
      case CellKind::Free: os << "*"; break;
      case CellKind::FixedZero: os << "0"; break;
      case CellKind::PositiveAnchor: os << "+"; break;
      case CellKind::FixedValue: {
        char buf[40];
        std::snprintf(buf, sizeof buf, "v%.17g", c.value);
        os << buf;
        break;
      }
    }
    os << ",";
  }
  return os.str();
}

bool PatternMatrix::operator==(const PatternMatrix& other) const {
  if (p_ != other.p_ || m_ != other.m_) return false;
  for (size_t k = 0; k < cells_.size(); ++k) {
    if (cells_[k].kind != other.cells_[k].kind) return false;
    if (cells_[k].kind == CellKind::FixedValue && cells_[k].value != other.cells_[k].value) return false;
  }
  return true;
}

void PatternMatrix::validate() const {
  if (p_ < 1 || m_ < 0) throw model_error("pattern dimensions invalid");
  for (int j = 0; j < m_; ++j) {
    if (anchor_rows_of_column(j).size() > 1) {
      throw model_error("column " + std::to_string(j + 1) + " designates more than one anchor");
    }
  }
}

void FactorModel::validate() const {
  const int pp = p();
  const int mm = m();
  if (static_cast<int>(unique_variances.size()) != pp) throw model_error("unique variance length mismatch");
  if (factor_correlations.rows() != mm || factor_correlations.cols() != mm) {
    throw model_error("factor correlation dimension mismatch");
  }
  if ((unique_variances.array() <= 0.0).any()) throw model_error("unique variances must be strictly positive");
  if (mm > 0) {
    if (!factor_correlations.isApprox(factor_correlations.transpose(), 1e-12)) {
      throw model_error("factor correlations not symmetric");
    }
    for (int j = 0; j < mm; ++j) {
      if (std::abs(factor_correlations(j, j) - 1.0) > 1e-10) {
        throw model_error("factor correlations must have unit diagonal");
      }
    }
    if (smallest_eigenvalue(factor_correlations) <= 0.0) {
      throw model_error("factor correlations not positive definite");
    }
  }
  if (smallest_eigenvalue(implied_covariance(*this)) <= 0.0) {
    throw model_error("implied covariance not positive definite");
  }
}

void TrueModelSpec::validate() const {
  model.validate();
  if (n < 2) throw model_error("true model spec needs n >= 2");
}

Matrix implied_covariance(const FactorModel& model) {
  if (model.m() == 0) return Matrix(model.unique_variances.asDiagonal());
  Matrix sigma = model.loadings * model.factor_correlations * model.loadings.transpose();
  sigma += Matrix(model.unique_variances.asDiagonal());
  return symmetrize(sigma);
}

double log_likelihood(const Dataset& data, const FactorModel& model) {
  const int n = data.n();
  const int p = data.p();
  if (p != model.p()) throw model_error("data/model dimension mismatch");
  if (n == 0) return 0.0;
  const Matrix sigma = implied_covariance(model);
  const auto llt = chol_spd(sigma, "log_likelihood");
  const double logdet = logdet_from_llt(llt);
  // Quadratic forms via the Cholesky factor: sum_i |L^{-1} y_i|^2 computed as
  // one triangular solve on the whole data block, then a flat sum of squares.
  Matrix solved = llt.matrixL().solve(data.values.transpose());
  const double quad = kernels::ssq(solved.data(), static_cast<size_t>(solved.size()));
  return -0.5 * (n * (p * std::log(2.0 * M_PI) + logdet) + quad);
}

double log_likelihood_scatter(const Matrix& scatter, int n, const Matrix& sigma) {
  const int p = static_cast<int>(sigma.rows());
  if (n == 0) return 0.0;
  const auto llt = chol_spd(sigma, "log_likelihood");
  const double logdet = logdet_from_llt(llt);
  const double quad = llt.solve(scatter).trace();
  return -0.5 * (n * (p * std::log(2.0 * M_PI) + logdet) + quad);
}

Dataset standardize(const Dataset& data) {
  data.validate();
  const int n = data.n();
  const int p = data.p();
  Dataset out;
  out.item_names = data.item_names;
  out.standardized = true;
  out.values.resize(n, p);
  for (int j = 0; j < p; ++j) {
    const double* col = data.values.col(j).data();
    const double mean = kernels::sum(col, n) / n;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = col[i] - mean;
      out.values(i, j) = d;
      ss += d * d;
    }
    const double var = ss / (n - 1);
    if (var <= 0.0 || !std::isfinite(var)) {
      throw model_error("cannot standardize constant column: " + data.item_names[j]);
    }
    out.values.col(j) /= std::sqrt(var);
  }
  return out;
}

Dataset generate_synthetic(const TrueModelSpec& spec) {
  spec.validate();
  const int p = spec.model.p();
  const Matrix sigma = implied_covariance(spec.model);
  const auto llt = chol_spd(sigma, "generate_synthetic");
  const Matrix L = llt.matrixL();
  Rng rng(spec.seed);
  Dataset out;
  out.values.resize(spec.n, p);
  for (int i = 0; i < spec.n; ++i) {
    out.values.row(i) = (L * rng.normal_vector(p)).transpose();
  }
  out.item_names.reserve(p);
  for (int j = 0; j < p; ++j) out.item_names.push_back("V" + std::to_string(j + 1));
  return out;
}

}  // namespace cfms
