#include "cpk/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "cpk/error.hpp"

namespace cpk {

namespace {

constexpr double kMaxExponent = 700.0;

double logistic(double u) { return 1.0 / (1.0 + std::exp(-std::clamp(u, -kMaxExponent, kMaxExponent))); }

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string("non-finite ") + what);
}

Eigen::MatrixXd leaf_features(const KernelExpr& leaf, const Inputs& x) {
  Eigen::MatrixXd f(x.rows(), static_cast<Eigen::Index>(leaf.inputs.size()));
  for (std::size_t d = 0; d < leaf.inputs.size(); ++d) {
    const auto& b = leaf.inputs[d];
    const auto col = static_cast<Eigen::Index>(x.index(b.column));
    for (Eigen::Index i = 0; i < x.rows(); ++i) f(i, static_cast<Eigen::Index>(d)) = b.apply(x.values(i, col));
  }
  return f;
}

struct SdofParams {
  double scale, decay, omega_d, ratio;
};

SdofParams sdof_params(double variance, double mass, double damping, double omega_n) {
  require_finite(variance, "sdof variance");
  require_finite(mass, "sdof mass");
  require_finite(damping, "sdof damping");
  require_finite(omega_n, "sdof natural frequency");
  if (!(damping > 0.0 && damping < 1.0))
    throw DomainError("sdof damping ratio must lie in (0, 1), got " + std::to_string(damping));
  if (!(omega_n > 0.0) || !(mass > 0.0)) throw DomainError("sdof mass and natural frequency must be positive");
  const double omega_d = omega_n * std::sqrt(1.0 - damping * damping);
  const double decay = damping * omega_n;
  return {variance / (4.0 * mass * mass * damping * omega_n * omega_n * omega_n), decay, omega_d, decay / omega_d};
}

inline double sdof_eval(const SdofParams& p, double tau) {
  const double at = std::abs(tau);
  return p.scale * std::exp(-p.decay * at) * (std::cos(p.omega_d * at) + p.ratio * std::sin(p.omega_d * at));
}

// Generic parallel fill: out(i, j) = f(i, j). For symmetric fills only the
// lower triangle is computed and then mirrored.
template <class F>
void fill(Eigen::MatrixXd& out, Eigen::Index n, Eigen::Index m, bool symmetric, F&& f) {
  out.resize(n, m);
  if (symmetric) {
#pragma omp parallel for schedule(dynamic, 16)
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = j; i < n; ++i) out(i, j) = f(i, j);
    out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
  } else {
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) out(i, j) = f(i, j);
  }
}

struct LeafEval {
  const KernelExpr& leaf;
  const ParamVector& params;
  Eigen::MatrixXd fa;  // features of the row inputs
  Eigen::MatrixXd fb;  // features of the column inputs
  bool symmetric;

  double p(std::size_t k) const { return params[leaf.slots[k]].value; }

  Eigen::VectorXd switch_vector(const Eigen::MatrixXd& f, double a, double x0) const {
    Eigen::VectorXd s(f.rows());
    const bool neg = leaf.kind == NodeKind::sigmoid_neg;
    for (Eigen::Index i = 0; i < f.rows(); ++i) s[i] = neg ? sigmoid_neg(f(i, 0), a, x0) : sigmoid(f(i, 0), a, x0);
    return s;
  }

  Eigen::MatrixXd value() const { return value_with(nullptr); }

  // Leaf matrix, optionally with one parameter overridden (used for finite
  // differences).
  Eigen::MatrixXd value_with(const std::pair<std::size_t, double>* override_slot) const {
    auto par = [&](std::size_t k) {
      if (override_slot && override_slot->first == k) return override_slot->second;
      return p(k);
    };
    Eigen::MatrixXd out;
    const Eigen::Index n = fa.rows(), m = fb.rows();
    switch (leaf.kind) {
      case NodeKind::se: {
        const double var = par(0);
        const Eigen::Index d = fa.cols();
        Eigen::VectorXd inv_ls(d);
        for (Eigen::Index k = 0; k < d; ++k) inv_ls[k] = 1.0 / par(static_cast<std::size_t>(k) + 1);
        const Eigen::MatrixXd a = fa * inv_ls.asDiagonal();
        const Eigen::MatrixXd b = fb * inv_ls.asDiagonal();
        fill(out, n, m, symmetric, [&](Eigen::Index i, Eigen::Index j) {
          double r2 = 0.0;
          for (Eigen::Index k = 0; k < d; ++k) {
            const double diff = a(i, k) - b(j, k);
            r2 += diff * diff;
          }
          return var * std::exp(-0.5 * r2);
        });
        break;
      }
      case NodeKind::poly2: {
        const double var = par(0), c = par(1);
        fill(out, n, m, symmetric, [&](Eigen::Index i, Eigen::Index j) {
          const double s = fa.row(i).dot(fb.row(j)) + c;
          return var * s * s;
        });
        break;
      }
      case NodeKind::sdof: {
        const SdofParams sp = sdof_params(par(0), par(1), par(2), par(3));
        fill(out, n, m, symmetric, [&](Eigen::Index i, Eigen::Index j) { return sdof_eval(sp, fa(i, 0) - fb(j, 0)); });
        break;
      }
      case NodeKind::sigmoid:
      case NodeKind::sigmoid_neg: {
        const double a = par(0), x0 = par(1);
        require_finite(a, "switch gradient");
        require_finite(x0, "switch location");
        const Eigen::VectorXd sa = switch_vector(fa, a, x0);
        const Eigen::VectorXd sb = symmetric ? sa : switch_vector(fb, a, x0);
        fill(out, n, m, symmetric, [&](Eigen::Index i, Eigen::Index j) { return sa[i] * sb[j]; });
        break;
      }
      default:
        throw ConfigError("not a leaf");
    }
    return out;
  }

  // d leaf / d (transformed value of slot position k). `k` indexes leaf.slots.
  Eigen::MatrixXd derivative(std::size_t k, const Eigen::MatrixXd& value) const {
    const Param& prm = params[leaf.slots[k]];
    const double jac = prm.jacobian();
    const Eigen::Index n = fa.rows(), m = fb.rows();
    Eigen::MatrixXd out;
    switch (leaf.kind) {
      case NodeKind::se: {
        if (k == 0) return value * (jac / p(0));
        const auto d = static_cast<Eigen::Index>(k - 1);
        const double ls = p(k);
        const double f = jac / (ls * ls * ls);
        fill(out, n, m, symmetric, [&](Eigen::Index i, Eigen::Index j) {
          const double diff = fa(i, d) - fb(j, d);
          return value(i, j) * diff * diff * f;
        });
        return out;
      }
      case NodeKind::poly2: {
        const double var = p(0), c = p(1);
        fill(out, n, m, symmetric, [&](Eigen::Index i, Eigen::Index j) {
          const double s = fa.row(i).dot(fb.row(j)) + c;
          return k == 0 ? s * s * jac : 2.0 * var * s * jac;
        });
        return out;
      }
      case NodeKind::sigmoid:
      case NodeKind::sigmoid_neg: {
        const double a = p(0), x0 = p(1);
        const double sign = leaf.kind == NodeKind::sigmoid_neg ? -1.0 : 1.0;
        auto ds = [&](const Eigen::MatrixXd& f, Eigen::VectorXd& s, Eigen::VectorXd& dsv) {
          s.resize(f.rows());
          dsv.resize(f.rows());
          for (Eigen::Index i = 0; i < f.rows(); ++i) {
            const double sp = sigmoid(f(i, 0), a, x0);
            const double w = sp * (1.0 - sp);
            s[i] = sign > 0 ? sp : sigmoid_neg(f(i, 0), a, x0);
            dsv[i] = sign * jac * (k == 0 ? w * (f(i, 0) - x0) : -a * w);
          }
        };
        Eigen::VectorXd sa, da, sb, db;
        ds(fa, sa, da);
        if (symmetric) {
          sb = sa;
          db = da;
        } else {
          ds(fb, sb, db);
        }
        fill(out, n, m, symmetric, [&](Eigen::Index i, Eigen::Index j) { return da[i] * sb[j] + sa[i] * db[j]; });
        return out;
      }
      case NodeKind::sdof: {
        const double t = prm.to_transformed(prm.value);
        const double h = 1e-6 * std::max(1.0, std::abs(t));
        const std::pair<std::size_t, double> plus{k, prm.from_transformed(t + h)};
        const std::pair<std::size_t, double> minus{k, prm.from_transformed(t - h)};
        out = value_with(&plus);
        out -= value_with(&minus);
        out /= 2.0 * h;
        return out;
      }
      default:
        throw ConfigError("not a leaf");
    }
  }
};

// Node values of the whole tree, kept for the product rule.
struct NodeCache {
  Eigen::MatrixXd value;
  std::vector<NodeCache> children;
  std::optional<LeafEval> leaf;
};

NodeCache build_cache(const KernelExpr& e, const ParamVector& params, const Inputs& x, const Inputs& x2,
                      bool symmetric) {
  NodeCache c;
  if (e.is_leaf()) {
    c.leaf.emplace(LeafEval{e, params, leaf_features(e, x), symmetric ? Eigen::MatrixXd() : leaf_features(e, x2),
                            symmetric});
    if (symmetric) c.leaf->fb = c.leaf->fa;
    c.value = c.leaf->value();
    return c;
  }
  c.children.reserve(e.children.size());
  for (const auto& ch : e.children) c.children.push_back(build_cache(ch, params, x, x2, symmetric));
  c.value = c.children[0].value;
  for (std::size_t k = 1; k < c.children.size(); ++k) {
    if (e.kind == NodeKind::sum)
      c.value += c.children[k].value;
    else
      c.value.array() *= c.children[k].value.array();
  }
  return c;
}

Eigen::MatrixXd evaluate(const KernelExpr& e, const ParamVector& params, const Inputs& x, const Inputs& x2,
                         bool symmetric) {
  if (e.is_leaf()) {
    LeafEval le{e, params, leaf_features(e, x), symmetric ? Eigen::MatrixXd() : leaf_features(e, x2), symmetric};
    if (symmetric) le.fb = le.fa;
    return le.value();
  }
  Eigen::MatrixXd acc = evaluate(e.children[0], params, x, x2, symmetric);
  for (std::size_t k = 1; k < e.children.size(); ++k) {
    const Eigen::MatrixXd c = evaluate(e.children[k], params, x, x2, symmetric);
    if (e.kind == NodeKind::sum)
      acc += c;
    else
      acc.array() *= c.array();
  }
  return acc;
}

std::optional<Eigen::MatrixXd> derivative(const KernelExpr& e, const NodeCache& c, std::size_t slot) {
  if (e.is_leaf()) {
    std::optional<Eigen::MatrixXd> acc;
    for (std::size_t k = 0; k < e.slots.size(); ++k) {
      if (e.slots[k] != slot) continue;
      Eigen::MatrixXd d = c.leaf->derivative(k, c.value);
      if (acc)
        *acc += d;
      else
        acc = std::move(d);
    }
    return acc;
  }
  std::optional<Eigen::MatrixXd> acc;
  for (std::size_t i = 0; i < e.children.size(); ++i) {
    auto d = derivative(e.children[i], c.children[i], slot);
    if (!d) continue;
    if (e.kind == NodeKind::product)
      for (std::size_t j = 0; j < e.children.size(); ++j)
        if (j != i) d->array() *= c.children[j].value.array();
    if (acc)
      *acc += *d;
    else
      acc = std::move(d);
  }
  return acc;
}

Eigen::VectorXd diag_of(const KernelExpr& e, const ParamVector& params, const Inputs& x) {
  const Eigen::Index n = x.rows();
  if (e.is_leaf()) {
    const Eigen::MatrixXd f = leaf_features(e, x);
    auto p = [&](std::size_t k) { return params[e.slots[k]].value; };
    Eigen::VectorXd d(n);
    switch (e.kind) {
      case NodeKind::se: d.setConstant(p(0)); break;
      case NodeKind::poly2:
        for (Eigen::Index i = 0; i < n; ++i) {
          const double s = f.row(i).squaredNorm() + p(1);
          d[i] = p(0) * s * s;
        }
        break;
      case NodeKind::sdof: d.setConstant(sdof_eval(sdof_params(p(0), p(1), p(2), p(3)), 0.0)); break;
      case NodeKind::sigmoid:
      case NodeKind::sigmoid_neg:
        for (Eigen::Index i = 0; i < n; ++i) {
          const double s = e.kind == NodeKind::sigmoid ? sigmoid(f(i, 0), p(0), p(1)) : sigmoid_neg(f(i, 0), p(0), p(1));
          d[i] = s * s;
        }
        break;
      default: break;
    }
    return d;
  }
  Eigen::VectorXd acc = diag_of(e.children[0], params, x);
  for (std::size_t k = 1; k < e.children.size(); ++k) {
    const Eigen::VectorXd c = diag_of(e.children[k], params, x);
    if (e.kind == NodeKind::sum)
      acc += c;
    else
      acc.array() *= c.array();
  }
  return acc;
}

}  // namespace

double sigmoid(double x, double a, double x0) {
  require_finite(x, "sigmoid input");
  require_finite(a, "sigmoid gradient");
  require_finite(x0, "sigmoid location");
  return logistic(a * (x - x0));
}

double sigmoid_neg(double x, double a, double x0) {
  require_finite(x, "sigmoid input");
  require_finite(a, "sigmoid gradient");
  require_finite(x0, "sigmoid location");
  return logistic(-a * (x - x0));
}

double sdof_covariance(double tau, double variance, double mass, double damping, double omega_n) {
  require_finite(tau, "lag");
  return sdof_eval(sdof_params(variance, mass, damping, omega_n), tau);
}

Eigen::MatrixXd eval_kernel(const KernelExpr& expr, const ParamVector& params, const Inputs& x, const Inputs& x2) {
  check_columns(expr, x);
  check_columns(expr, x2);
  return evaluate(expr, params, x, x2, false);
}

Eigen::MatrixXd eval_kernel(const KernelExpr& expr, const ParamVector& params, const Inputs& x) {
  check_columns(expr, x);
  return evaluate(expr, params, x, x, true);
}

Eigen::VectorXd eval_diag(const KernelExpr& expr, const ParamVector& params, const Inputs& x) {
  check_columns(expr, x);
  return diag_of(expr, params, x);
}

void visit_kernel_gradients(const KernelExpr& expr, const ParamVector& params, const Inputs& x,
                            const GradientVisitor& visit) {
  check_columns(expr, x);
  const NodeCache cache = build_cache(expr, params, x, x, true);
  const auto free = params.free_indices();
  for (std::size_t k = 0; k < free.size(); ++k) {
    auto d = derivative(expr, cache, free[k]);
    if (d) visit(k, *d);
  }
}

std::vector<Eigen::MatrixXd> kernel_grad(const KernelExpr& expr, const ParamVector& params, const Inputs& x) {
  std::vector<Eigen::MatrixXd> out(params.free_count(), Eigen::MatrixXd::Zero(x.rows(), x.rows()));
  visit_kernel_gradients(expr, params, x, [&](std::size_t k, const Eigen::MatrixXd& d) { out[k] = d; });
  return out;
}

}  // namespace cpk
