#include "cpk/reference.hpp"

#include <cmath>

#include "cpk/error.hpp"

namespace cpk::reference {

namespace {

double feature(const ColumnBinding& b, const Inputs& x, Eigen::Index row) {
  const double raw = x.values(row, static_cast<Eigen::Index>(x.index(b.column)));
  double v = raw;
  if (b.feature == Feature::cos2) v = std::cos(2.0 * raw);
  if (b.feature == Feature::negate) v = -raw;
  return (v - b.shift) / b.scale;
}

double switch_value(double z, double a, double x0, bool negative) {
  double u = a * (z - x0);
  if (negative) u = -u;
  if (u > 700.0) u = 700.0;
  if (u < -700.0) u = -700.0;
  return 1.0 / (1.0 + std::exp(-u));
}

}  // namespace

double kernel_value(const KernelExpr& e, const ParamVector& params, const Inputs& x, Eigen::Index i,
                    const Inputs& x2, Eigen::Index j) {
  auto p = [&](std::size_t k) { return params[e.slots[k]].value; };
  switch (e.kind) {
    case NodeKind::sum: {
      double s = 0.0;
      for (const auto& c : e.children) s += kernel_value(c, params, x, i, x2, j);
      return s;
    }
    case NodeKind::product: {
      double s = 1.0;
      for (const auto& c : e.children) s *= kernel_value(c, params, x, i, x2, j);
      return s;
    }
    case NodeKind::se: {
      double r2 = 0.0;
      for (std::size_t d = 0; d < e.inputs.size(); ++d) {
        const double diff = (feature(e.inputs[d], x, i) - feature(e.inputs[d], x2, j)) / p(d + 1);
        r2 += diff * diff;
      }
      return p(0) * std::exp(-0.5 * r2);
    }
    case NodeKind::poly2: {
      double dot = 0.0;
      for (const auto& b : e.inputs) dot += feature(b, x, i) * feature(b, x2, j);
      return p(0) * (dot + p(1)) * (dot + p(1));
    }
    case NodeKind::sdof: {
      const double var = p(0), m = p(1), zeta = p(2), wn = p(3);
      if (!(zeta > 0.0 && zeta < 1.0)) throw DomainError("sdof damping ratio must lie in (0, 1)");
      const double wd = wn * std::sqrt(1.0 - zeta * zeta);
      const double tau = feature(e.inputs[0], x, i) - feature(e.inputs[0], x2, j);
      const double at = std::abs(tau);
      return var / (4.0 * m * m * zeta * wn * wn * wn) * std::exp(-zeta * wn * at) *
             (std::cos(wd * tau) + zeta * wn / wd * std::sin(wd * at));
    }
    case NodeKind::sigmoid:
    case NodeKind::sigmoid_neg: {
      const bool neg = e.kind == NodeKind::sigmoid_neg;
      return switch_value(feature(e.inputs[0], x, i), p(0), p(1), neg) *
             switch_value(feature(e.inputs[0], x2, j), p(0), p(1), neg);
    }
  }
  return 0.0;
}

Eigen::MatrixXd gram(const KernelExpr& expr, const ParamVector& params, const Inputs& x, const Inputs& x2) {
  check_columns(expr, x);
  check_columns(expr, x2);
  Eigen::MatrixXd k(x.rows(), x2.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x2.rows(); ++j) k(i, j) = kernel_value(expr, params, x, i, x2, j);
  return k;
}

}  // namespace cpk::reference
