#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <vector>

#include "cpk/dataset.hpp"
#include "cpk/kernel_expr.hpp"
#include "cpk/params.hpp"

namespace cpk {

// Logistic switch 1 / (1 + exp(-a (x - x0))). The exponent is clamped to
// +-700 so the result stays finite for any finite input.
double sigmoid(double x, double a, double x0);

// Complementary switch 1 / (1 + exp(a (x - x0))) = 1 - sigmoid(x, a, x0).
double sigmoid_neg(double x, double a, double x0);

// Covariance of a single-degree-of-freedom oscillator driven by white noise,
// as a function of the lag tau. Throws DomainError unless 0 < damping < 1.
double sdof_covariance(double tau, double variance, double mass, double damping, double omega_n);

// Cross-covariance K(X, X2); rows index X, columns index X2. Leaves are
// filled in parallel over column blocks.
Eigen::MatrixXd eval_kernel(const KernelExpr& expr, const ParamVector& params, const Inputs& x,
                            const Inputs& x2);

// Training covariance K(X, X). The lower triangle is evaluated and mirrored,
// so the result equals its transpose exactly.
Eigen::MatrixXd eval_kernel(const KernelExpr& expr, const ParamVector& params, const Inputs& x);

// diag K(X, X) without forming the matrix.
Eigen::VectorXd eval_diag(const KernelExpr& expr, const ParamVector& params, const Inputs& x);

// Calls `visit(k, dK)` with dK = dK(X,X)/dt_k for every free parameter k
// (position within ParamVector::free_indices()) that the kernel depends on,
// where t_k is the transformed value. Parameters the kernel does not
// reference are skipped. SDOF leaves are differentiated by central
// differences with step 1e-6 * max(1, |t_k|); all other leaves are analytic.
using GradientVisitor = std::function<void(std::size_t free_index, const Eigen::MatrixXd& dK)>;
void visit_kernel_gradients(const KernelExpr& expr, const ParamVector& params, const Inputs& x,
                            const GradientVisitor& visit);

// One matrix per free parameter, zero for parameters the kernel ignores.
std::vector<Eigen::MatrixXd> kernel_grad(const KernelExpr& expr, const ParamVector& params,
                                         const Inputs& x);

}  // namespace cpk
