#pragma once

#include <Eigen/Core>

#include "cpk/dataset.hpp"
#include "cpk/kernel_expr.hpp"
#include "cpk/params.hpp"

// Serial, pointwise kernel evaluation. Walks the expression tree once per
// matrix entry with its own formulas; used by the tests and the benchmark
// as the baseline for the parallel leaf-matrix path in kernels.hpp.
namespace cpk::reference {

double kernel_value(const KernelExpr& expr, const ParamVector& params, const Inputs& x, Eigen::Index i,
                    const Inputs& x2, Eigen::Index j);

Eigen::MatrixXd gram(const KernelExpr& expr, const ParamVector& params, const Inputs& x, const Inputs& x2);

}  // namespace cpk::reference
