#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

#include "lad/errors.hpp"

namespace lad {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline bool is_symmetric(const Matrix& a, double tol = 1e-12) {
  return a.rows() == a.cols() && (a - a.transpose()).cwiseAbs().maxCoeff() <= tol;
}

/// Ratio of extreme eigenvalue magnitudes of the symmetric part.
inline double condition_estimate(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(a), Eigen::EigenvaluesOnly);
  const Vector ev = solver.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// On failure the diagonal is jittered by 1e-10 * trace / K and retried, the
/// jitter growing tenfold per retry, for at most three retries.
inline Matrix cholesky_lower(const Matrix& a) {
  const Eigen::Index k = a.rows();
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  const double base = 1e-10 * std::abs(a.trace()) / static_cast<double>(k);
  double jitter = base > 0.0 ? base : 1e-10;
  for (int attempt = 0; attempt < 3; ++attempt, jitter *= 10.0) {
    Matrix repaired = a;
    repaired.diagonal().array() += jitter;
    llt.compute(repaired);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  std::ostringstream msg;
  msg << "Cholesky factorization failed after jitter (K=" << k
      << ", condition estimate " << condition_estimate(a) << ")";
  throw NumericalError(msg.str());
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
inline Matrix spd_inverse(const Matrix& a) {
  const Matrix lower = cholesky_lower(a);
  const Matrix identity = Matrix::Identity(a.rows(), a.cols());
  const Matrix half = lower.triangularView<Eigen::Lower>().solve(identity);
  return symmetrize(half.transpose() * half);
}

}  // namespace lad
