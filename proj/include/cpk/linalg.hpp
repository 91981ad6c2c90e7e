#pragma once

#include <Eigen/Core>

namespace cpk {

// Lower Cholesky factor of (A + jitter * I).
struct Cholesky {
  Eigen::MatrixXd lower;  // only the lower triangle is meaningful
  double jitter = 0.0;

  Eigen::Index size() const { return lower.rows(); }
  // (A + jitter I)^{-1} b
  Eigen::MatrixXd solve(const Eigen::Ref<const Eigen::MatrixXd>& b) const;
  // L^{-1} b
  Eigen::MatrixXd solve_lower(const Eigen::Ref<const Eigen::MatrixXd>& b) const;
  Eigen::MatrixXd inverse() const;
  double log_det() const;  // log |A + jitter I|
};

// Factorises a symmetric matrix with the shared jitter policy: start at
// 1e-8 * mean(diag), multiply by 10 on failure, give up beyond
// 1e-2 * mean(diag) with a NumericalError carrying the last jitter tried.
// The matrix is consumed to avoid a second N x N buffer.
Cholesky factorize(Eigen::MatrixXd a);

// Same, but starting from an explicit relative jitter (0 disables the
// initial jitter; escalation still starts at 1e-8).
Cholesky factorize(Eigen::MatrixXd a, double initial_relative_jitter);

}  // namespace cpk
