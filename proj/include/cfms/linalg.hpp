#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "cfms/errors.hpp"

namespace cfms {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Cholesky that converts failure into the project's numeric error.
inline Eigen::LLT<Matrix> chol_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw numeric_error(std::string(what) + ": covariance not PD");
  return llt;
}

inline double logdet_from_llt(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

inline double smallest_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Rescale a covariance matrix to the correlation metric; returns D^{-1/2} S D^{-1/2}.
inline Matrix correlation_from_covariance(const Matrix& s) {
  const Vector d = s.diagonal().array().sqrt().inverse();
  Matrix r = d.asDiagonal() * s * d.asDiagonal();
  r.diagonal().setOnes();
  return symmetrize(r);
}

}  // namespace cfms
