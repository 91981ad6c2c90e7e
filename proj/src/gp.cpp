#include "cpk/gp.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "cpk/error.hpp"
#include "cpk/kernels.hpp"
#include "cpk/rng.hpp"

namespace cpk {

namespace {

constexpr Eigen::Index kPredictBlock = 1024;

double noise_of(const ParamVector& params) {
  const auto i = params.find(kNoiseParam);
  if (!i) throw ConfigError("parameter vector lacks '" + std::string(kNoiseParam) + "'");
  return params[*i].value;
}

Cholesky factor_training(const KernelExpr& expr, const ParamVector& params, double noise_variance,
                         const Inputs& x) {
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
    throw InvalidArgument("noise variance must be finite and non-negative");
  Eigen::MatrixXd k = eval_kernel(expr, params, x);
  k.diagonal().array() += noise_variance;
  return factorize(std::move(k));
}

}  // namespace

std::size_t add_noise_param(ParamVector& params, double value, double lower, double upper) {
  if (auto i = params.find(kNoiseParam)) {
    params.reset(*i, value, lower, upper);
    return *i;
  }
  return params.add({std::string(kNoiseParam), value, lower, upper, Transform::log});
}

double nlml(const KernelExpr& expr, const ParamVector& params, double noise_variance, const Dataset& data) {
  const Cholesky c = factor_training(expr, params, noise_variance, data.x);
  const Eigen::VectorXd a = c.solve(data.y);
  const double n = static_cast<double>(data.y.size());
  return 0.5 * data.y.dot(a) + 0.5 * c.log_det() + 0.5 * n * std::log(2.0 * std::numbers::pi);
}

NlmlResult nlml_with_grad(const KernelExpr& expr, const ParamVector& params, const Dataset& data) {
  const double s2 = noise_of(params);
  const Cholesky c = factor_training(expr, params, s2, data.x);
  const Eigen::VectorXd a = c.solve(data.y);
  const double n = static_cast<double>(data.y.size());

  NlmlResult r;
  r.value = 0.5 * data.y.dot(a) + 0.5 * c.log_det() + 0.5 * n * std::log(2.0 * std::numbers::pi);
  r.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.free_count()));

  // W = a a^T - K_y^{-1}
  Eigen::MatrixXd w = c.inverse();
  w = -w;
  w.noalias() += a * a.transpose();

  // The jitter is proportional to mean(diag K_y), so it moves with every parameter.
  const double rel = c.jitter / (eval_diag(expr, params, data.x).mean() + s2);
  const double trace_w = w.trace();
  visit_kernel_gradients(expr, params, data.x, [&](std::size_t k, const Eigen::MatrixXd& dk) {
    r.gradient[static_cast<Eigen::Index>(k)] =
        -0.5 * ((w.array() * dk.array()).sum() + trace_w * rel * dk.diagonal().mean());
  });

  const auto free = params.free_indices();
  const std::size_t noise_index = params.index(kNoiseParam);
  for (std::size_t k = 0; k < free.size(); ++k)
    if (free[k] == noise_index)
      r.gradient[static_cast<Eigen::Index>(k)] = -0.5 * trace_w * (1.0 + rel) * params[noise_index].jacobian();
  return r;
}

Eigen::VectorXd nlml_grad(const KernelExpr& expr, const ParamVector& params, const Dataset& data) {
  return nlml_with_grad(expr, params, data).gradient;
}

double GPState::noise_variance() const { return noise_of(params); }

GPState make_state(KernelExpr kernel, ParamVector params, Dataset train) {
  train.validate();
  validate(kernel, params);
  check_columns(kernel, train.x);
  GPState s{std::move(kernel), std::move(params), std::move(train), {}, {}};
  s.factor = factor_training(s.kernel, s.params, s.noise_variance(), s.train.x);
  s.alpha = s.factor.solve(s.train.y);
  return s;
}

Posterior predict(const GPState& state, const Inputs& xstar) {
  check_columns(state.kernel, xstar);
  const Eigen::Index m = xstar.rows();
  Posterior p;
  p.mean.resize(m);
  p.var_latent.resize(m);
  const double s2 = state.noise_variance();
  for (Eigen::Index start = 0; start < m; start += kPredictBlock) {
    const Eigen::Index len = std::min(kPredictBlock, m - start);
    std::vector<std::size_t> rows(static_cast<std::size_t>(len));
    for (Eigen::Index i = 0; i < len; ++i) rows[static_cast<std::size_t>(i)] = static_cast<std::size_t>(start + i);
    const Inputs block = xstar.select_rows(rows);
    const Eigen::MatrixXd ks = eval_kernel(state.kernel, state.params, state.train.x, block);
    p.mean.segment(start, len).noalias() = ks.transpose() * state.alpha;
    const Eigen::MatrixXd v = state.factor.solve_lower(ks);
    const Eigen::VectorXd kss = eval_diag(state.kernel, state.params, block);
    p.var_latent.segment(start, len) = (kss - v.colwise().squaredNorm().transpose()).cwiseMax(0.0);
  }
  p.var_noisy = p.var_latent.array() + s2;
  return p;
}

Eigen::MatrixXd sample_prior(const KernelExpr& expr, const ParamVector& params, const Inputs& xstar, int n_draws,
                             std::uint64_t seed) {
  if (n_draws < 1) throw InvalidArgument("need at least one draw");
  const Cholesky c = factorize(eval_kernel(expr, params, xstar));
  Rng rng(seed);
  Eigen::MatrixXd z(xstar.rows(), n_draws);
  for (Eigen::Index d = 0; d < n_draws; ++d)
    for (Eigen::Index i = 0; i < xstar.rows(); ++i) z(i, d) = rng.normal();
  return c.lower.triangularView<Eigen::Lower>() * z;
}

Objective nlml_objective(const KernelExpr& expr, const ParamVector& params, const Dataset& data) {
  auto work = std::make_shared<ParamVector>(params);
  return [&expr, &data, work](const Eigen::VectorXd& t, Eigen::VectorXd* grad) {
    work->set_free_transformed(t);
    if (grad == nullptr) return nlml(expr, *work, noise_of(*work), data);
    NlmlResult r = nlml_with_grad(expr, *work, data);
    *grad = std::move(r.gradient);
    return r.value;
  };
}

GpFit fit_gp(const KernelExpr& expr, const ParamVector& params, const Dataset& data, const OptConfig& config) {
  data.validate();
  validate(expr, params);
  check_columns(expr, data.x);
  noise_of(params);
  FitReport report = minimize(nlml_objective(expr, params, data), params, config);
  GPState state = make_state(expr, report.params, data);
  return {std::move(state), std::move(report)};
}

TargetScaler TargetScaler::fit(const Eigen::VectorXd& y) {
  TargetScaler s;
  if (y.size() == 0) return s;
  s.mean = y.mean();
  const double var = (y.array() - s.mean).square().mean();
  s.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  return s;
}

Eigen::VectorXd TargetScaler::apply(const Eigen::VectorXd& y) const { return (y.array() - mean) / scale; }

Eigen::VectorXd TargetScaler::invert_mean(const Eigen::VectorXd& m) const { return m.array() * scale + mean; }

Eigen::VectorXd TargetScaler::invert_variance(const Eigen::VectorXd& v) const { return v * (scale * scale); }

}  // namespace cpk
