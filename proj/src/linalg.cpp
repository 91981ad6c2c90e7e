#include "cpk/linalg.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>

#include "cpk/error.hpp"

namespace cpk {

Eigen::MatrixXd Cholesky::solve(const Eigen::Ref<const Eigen::MatrixXd>& b) const {
  Eigen::MatrixXd x = lower.triangularView<Eigen::Lower>().solve(b);
  lower.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
  return x;
}

Eigen::MatrixXd Cholesky::solve_lower(const Eigen::Ref<const Eigen::MatrixXd>& b) const {
  return lower.triangularView<Eigen::Lower>().solve(b);
}

Eigen::MatrixXd Cholesky::inverse() const {
  const Eigen::Index n = size();
  Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(n, n);
  lower.triangularView<Eigen::Lower>().solveInPlace(linv);
  Eigen::MatrixXd inv(n, n);
  inv.setZero();
  inv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());
  inv.triangularView<Eigen::StrictlyUpper>() = inv.transpose();
  return inv;
}

double Cholesky::log_det() const { return 2.0 * lower.diagonal().array().log().sum(); }

Cholesky factorize(Eigen::MatrixXd a) { return factorize(std::move(a), 1e-8); }

Cholesky factorize(Eigen::MatrixXd a, double initial_relative_jitter) {
  const Eigen::Index n = a.rows();
  if (n == 0 || a.cols() != n) throw InvalidArgument("factorize needs a non-empty square matrix");
  const double mean_diag = a.diagonal().mean();
  if (!std::isfinite(mean_diag)) throw NumericalError("covariance has non-finite diagonal");
  if (!(mean_diag > 0.0)) throw NumericalError("covariance has non-positive mean diagonal");
  const Eigen::VectorXd base_diag = a.diagonal();

  double rel = initial_relative_jitter;
  double jitter = rel * mean_diag;
  while (true) {
    a.diagonal() = base_diag.array() + jitter;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>, Eigen::Lower> llt(a);
    if (llt.info() == Eigen::Success && a.diagonal().allFinite()) {
      Cholesky c;
      c.lower = std::move(a);
      c.jitter = jitter;
      return c;
    }
    // The in-place factorisation overwrote the lower triangle; restore it
    // from the untouched upper triangle.
    a.triangularView<Eigen::StrictlyLower>() = a.transpose();
    rel = rel <= 0.0 ? 1e-8 : rel * 10.0;
    if (rel > 1e-2 * (1.0 + 1e-9)) {
      std::ostringstream msg;
      msg << "Cholesky factorisation failed with jitter up to " << jitter;
      throw NumericalError(msg.str(), jitter);
    }
    jitter = rel * mean_diag;
  }
}

}  // namespace cpk
