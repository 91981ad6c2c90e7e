#include "cpk/vhgp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <utility>

#include "cpk/error.hpp"
#include "cpk/kernels.hpp"

namespace cpk {

namespace {

constexpr Eigen::Index kPredictBlock = 1024;
// Mean and variance of log(chi^2_1).
constexpr double kLogChi2Mean = -1.2703628454614782;
constexpr double kLogChi2Var = std::numbers::pi * std::numbers::pi / 2.0;

void collect_bindings(const KernelExpr& e, std::vector<ColumnBinding>& out,
                      std::set<std::pair<std::string, Feature>>& seen) {
  if (!e.is_leaf()) {
    for (const auto& c : e.children) collect_bindings(c, out, seen);
    return;
  }
  if (e.kind != NodeKind::se && e.kind != NodeKind::sigmoid && e.kind != NodeKind::sigmoid_neg) return;
  for (const auto& b : e.inputs)
    if (seen.insert({b.column, b.feature}).second) out.push_back({b.column, b.feature, 0.0, 1.0});
}

// Everything the bound and its gradient need at one parameter setting.
struct Terms {
  Eigen::MatrixXd kg;
  Eigen::VectorXd m;
  Eigen::VectorXd mu;
  Eigen::VectorXd s;
  Cholesky c;
  Eigen::MatrixXd v;  // L_C^{-1} S K_g
  Eigen::VectorXd sigma_diag;
  Eigen::VectorXd r;
  Cholesky a;
  Eigen::VectorXd beta;
  double value = 0.0;
};

Terms compute_terms(const KernelExpr& kernel, const ParamVector& params, const NoiseModel& noise,
                    const Eigen::VectorXd& nu, const Eigen::VectorXd& lambda, const Dataset& data) {
  const Eigen::Index n = data.y.size();
  if (nu.size() != n || lambda.size() != n) throw InvalidArgument("variational state size does not match data");
  if (!(lambda.array() > 0.0).all() || !lambda.allFinite())
    throw InvalidArgument("variational lambda must be positive");

  Terms t;
  t.kg = eval_kernel(noise.kernel, noise.params, data.x);
  t.m = noise.mean(data.x);
  t.mu = t.m + t.kg * nu;
  t.s = (2.0 * lambda).array().sqrt();

  Eigen::MatrixXd cmat = t.s.asDiagonal() * t.kg * t.s.asDiagonal();
  cmat.diagonal().array() += 1.0;
  t.c = factorize(std::move(cmat), 0.0);
  t.v = t.c.solve_lower(t.s.asDiagonal() * t.kg);
  t.sigma_diag = t.kg.diagonal() - t.v.colwise().squaredNorm().transpose();

  t.r = (t.mu - 0.5 * t.sigma_diag).array().exp();
  if (!t.r.allFinite() || (t.r.array() <= 0.0).any())
    throw NumericalError("heteroscedastic noise left the representable range", 0.0);
  Eigen::MatrixXd amat = eval_kernel(kernel, params, data.x);
  amat.diagonal() += t.r;
  t.a = factorize(std::move(amat));
  t.beta = t.a.solve(data.y);

  const double nd = static_cast<double>(n);
  const double log_lik = -0.5 * data.y.dot(t.beta) - 0.5 * t.a.log_det() - 0.5 * nd * std::log(2.0 * std::numbers::pi);
  const Eigen::MatrixXd cinv = t.c.inverse();
  const double kl = 0.5 * (-nd + cinv.trace() + nu.dot(t.kg * nu) + t.c.log_det());
  t.value = log_lik - 0.25 * t.sigma_diag.sum() - kl;
  return t;
}

}  // namespace

Eigen::MatrixXd NoiseModel::design(const Inputs& x) const {
  const Eigen::Index d = static_cast<Eigen::Index>(inputs.size());
  Eigen::MatrixXd h(x.rows(), d + 1);
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto& b = inputs[static_cast<std::size_t>(j)];
    const Eigen::Index c = static_cast<Eigen::Index>(x.index(b.column));
    for (Eigen::Index i = 0; i < x.rows(); ++i) h(i, j) = b.apply(x.values(i, c));
  }
  h.col(d).setOnes();
  return h;
}

Eigen::VectorXd NoiseModel::mean(const Inputs& x) const {
  const std::size_t d = inputs.size();
  Eigen::VectorXd b(static_cast<Eigen::Index>(d + 1));
  for (std::size_t j = 0; j <= d; ++j) b[static_cast<Eigen::Index>(j)] = params[d + 1 + j].value;
  return design(x) * b;
}

NoiseModel make_noise_model(const KernelExpr& signal, const Inputs& x) {
  NoiseModel nm;
  std::set<std::pair<std::string, Feature>> seen;
  collect_bindings(signal, nm.inputs, seen);
  if (nm.inputs.empty()) throw ConfigError("heteroscedastic noise needs at least one SE or switch input");
  for (auto& b : nm.inputs) {
    const Eigen::Index c = static_cast<Eigen::Index>(x.index(b.column));
    Eigen::VectorXd f(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) f[i] = b.apply(x.values(i, c));
    b.shift = f.mean();
    const double sd = std::sqrt((f.array() - b.shift).square().mean());
    b.scale = sd > 1e-12 ? sd : 1.0;
  }

  nm.kernel.kind = NodeKind::se;
  nm.kernel.inputs = nm.inputs;
  nm.kernel.slots.push_back(nm.params.add({"noise_gp.variance", 1.0, 1e-4, 1e2, Transform::log}));
  for (const auto& b : nm.inputs) {
    nm.kernel.slots.push_back(
        nm.params.add({"noise_gp.lengthscale[" + b.label() + "]", 1.0, 0.1, 10.0, Transform::log}));
  }
  for (const auto& b : nm.inputs)
    nm.params.add({"noise_gp.mean[" + b.label() + "]", 0.0, -50.0, 50.0, Transform::identity});
  nm.params.add({"noise_gp.mean.intercept", 0.0, -50.0, 50.0, Transform::identity});
  return nm;
}

Eigen::VectorXd HGPState::pointwise_noise() const { return (q.mu - 0.5 * q.sigma).array().exp(); }

HGPState make_hgp_state(KernelExpr kernel, ParamVector params, NoiseModel noise, VariationalState q, Dataset train) {
  train.validate();
  validate(kernel, params);
  check_columns(kernel, train.x);
  validate(noise.kernel, noise.params);
  Terms t = compute_terms(kernel, params, noise, q.nu, q.lambda, train);
  if (!std::isfinite(t.value)) throw NumericalError("variational bound is not finite", t.a.jitter);
  q.mu = t.mu;
  q.sigma = t.sigma_diag;
  HGPState h{std::move(kernel), std::move(params), std::move(noise), std::move(q), std::move(train), t.value,
             std::move(t.a), std::move(t.beta), std::move(t.c), std::move(t.s)};
  return h;
}

double mv_bound(const HGPState& hgp, const Dataset& data) {
  return compute_terms(hgp.kernel, hgp.params, hgp.noise, hgp.q.nu, hgp.q.lambda, data).value;
}

BoundGradient mv_bound_with_grad(const KernelExpr& kernel, const ParamVector& params, const NoiseModel& noise,
                                 const Eigen::VectorXd& nu, const Eigen::VectorXd& lambda, const Dataset& data) {
  const Terms t = compute_terms(kernel, params, noise, nu, lambda, data);
  BoundGradient g;
  g.value = t.value;

  const Eigen::MatrixXd ainv = t.a.inverse();
  const Eigen::VectorXd h = 0.5 * (t.beta.array().square() - ainv.diagonal().array());
  const Eigen::VectorXd g1 = h.cwiseProduct(t.r);                      // dF/dmu
  const Eigen::VectorXd d = (-0.5 * g1.array() - 0.25).matrix();      // dF/dSigma_ii, data and trace terms

  g.nu = t.kg * (g1 - nu);

  // Sigma = K_g - V^T V
  Eigen::MatrixXd sigma = t.kg;
  sigma.noalias() -= t.v.transpose() * t.v;
  g.log_lambda = (-2.0 * (sigma.array().square().matrix() * (d + lambda))).cwiseProduct(lambda);

  // Signal kernel: 0.5 tr((b b^T - A^{-1}) dK_f)
  g.signal = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.free_count()));
  Eigen::MatrixXd w = -ainv;
  w.noalias() += t.beta * t.beta.transpose();
  visit_kernel_gradients(kernel, params, data.x, [&](std::size_t k, const Eigen::MatrixXd& dk) {
    g.signal[static_cast<Eigen::Index>(k)] = 0.5 * (w.array() * dk.array()).sum();
  });

  // Noise kernel: tr(M dK_g) with
  //   M = sym(nu g1^T) - nu nu^T / 2 + P (D + Lambda) P^T - S C^{-1} S / 2,
  //   P = I - S C^{-1} S K_g.
  Eigen::MatrixXd scs = t.s.asDiagonal() * t.c.inverse() * t.s.asDiagonal();
  Eigen::MatrixXd p = -scs * t.kg;
  p.diagonal().array() += 1.0;
  Eigen::MatrixXd mmat = p * (d + lambda).asDiagonal() * p.transpose();
  mmat.noalias() += 0.5 * (nu * g1.transpose() + g1 * nu.transpose());
  mmat.noalias() -= 0.5 * nu * nu.transpose();
  mmat -= 0.5 * scs;

  g.noise = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(noise.params.free_count()));
  visit_kernel_gradients(noise.kernel, noise.params, data.x, [&](std::size_t k, const Eigen::MatrixXd& dk) {
    g.noise[static_cast<Eigen::Index>(k)] = (mmat.array() * dk.array()).sum();
  });
  const Eigen::VectorXd gb = noise.design(data.x).transpose() * g1;
  const std::size_t first_mean = noise.inputs.size() + 1;
  const auto free = noise.params.free_indices();
  for (std::size_t k = 0; k < free.size(); ++k)
    if (free[k] >= first_mean) g.noise[static_cast<Eigen::Index>(k)] = gb[static_cast<Eigen::Index>(free[k] - first_mean)];
  return g;
}

VhgpConfig::VhgpConfig() {
  prefit.restarts = 3;
  optimizer.restarts = 1;
  optimizer.max_iterations = 400;
  optimizer.gradient_tolerance = 1e-4;
  optimizer.relative_tolerance = 1e-11;
  optimizer.memory = 20;
}

VhgpFit fit_vhgp(const KernelExpr& kernel, const ParamVector& params, const Dataset& data, const VhgpConfig& config) {
  data.validate();
  config.optimizer.validate();
  if (!(config.lambda0 > 0.0) || !(config.residual_floor > 0.0))
    throw ConfigError("lambda0 and residual floor must be positive");

  VhgpFit out;
  out.prefit = fit_gp(kernel, params, data, config.prefit);
  const Eigen::VectorXd resid = data.y - predict(out.prefit.state, data.x).mean;

  ParamVector signal = out.prefit.state.params;
  {
    const std::size_t i = signal.index(kNoiseParam);
    const double v = signal[i].value;
    signal.reset(i, v, v, v);
  }

  NoiseModel noise = make_noise_model(kernel, data.x);
  const Eigen::Index n = data.y.size();
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i)
    z[i] = std::log(std::max(resid[i] * resid[i], config.residual_floor)) - kLogChi2Mean;
  const Eigen::MatrixXd hmat = noise.design(data.x);
  const Eigen::VectorXd b = hmat.colPivHouseholderQr().solve(z);
  const std::size_t first_mean = noise.inputs.size() + 1;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const std::size_t i = first_mean + static_cast<std::size_t>(j);
    noise.params.set_value(i, std::clamp(b[j], noise.params[i].lower, noise.params[i].upper));
  }
  Eigen::MatrixXd kz = eval_kernel(noise.kernel, noise.params, data.x);
  kz.diagonal().array() += kLogChi2Var;
  Eigen::VectorXd nu0 = factorize(std::move(kz)).solve(z - noise.mean(data.x));
  Eigen::VectorXd lambda0 = Eigen::VectorXd::Constant(n, config.lambda0);

  // Joint vector: signal free, noise free, nu, lambda.
  ParamVector joint;
  for (std::size_t i : signal.free_indices()) joint.add(signal[i]);
  for (std::size_t i : noise.params.free_indices()) joint.add(noise.params[i]);
  for (Eigen::Index i = 0; i < n; ++i)
    joint.add({"q.nu[" + std::to_string(i) + "]", nu0[i], -1e8, 1e8, Transform::identity});
  for (Eigen::Index i = 0; i < n; ++i)
    joint.add({"q.lambda[" + std::to_string(i) + "]", lambda0[i], 1e-8, 1e8, Transform::log});

  const Eigen::Index ns = static_cast<Eigen::Index>(signal.free_count());
  const Eigen::Index nn = static_cast<Eigen::Index>(noise.params.free_count());
  ParamVector sig_work = signal;
  NoiseModel noise_work = noise;
  auto unpack = [&](const Eigen::VectorXd& t, Eigen::VectorXd& nu, Eigen::VectorXd& lambda) {
    sig_work.set_free_transformed(t.segment(0, ns));
    noise_work.params.set_free_transformed(t.segment(ns, nn));
    nu = t.segment(ns + nn, n);
    lambda = t.segment(ns + nn + n, n).array().exp();
  };

  const Objective objective = [&](const Eigen::VectorXd& t, Eigen::VectorXd* grad) {
    Eigen::VectorXd nu, lambda;
    unpack(t, nu, lambda);
    if (!grad) return -compute_terms(kernel, sig_work, noise_work, nu, lambda, data).value;
    const BoundGradient g = mv_bound_with_grad(kernel, sig_work, noise_work, nu, lambda, data);
    grad->resize(t.size());
    *grad << -g.signal, -g.noise, -g.nu, -g.log_lambda;
    return -g.value;
  };

  OptConfig cfg = config.optimizer;
  cfg.restarts = 1;
  out.initial_bound = compute_terms(kernel, signal, noise, nu0, lambda0, data).value;
  out.report = minimize(objective, joint, cfg);

  Eigen::VectorXd nu, lambda;
  unpack(out.report.params.free_transformed(), nu, lambda);
  out.state = make_hgp_state(kernel, sig_work, noise_work, {nu, lambda, {}, {}}, data);
  return out;
}

LogNoise predict_log_noise(const HGPState& hgp, const Inputs& xstar) {
  const Eigen::MatrixXd kx = eval_kernel(hgp.noise.kernel, hgp.noise.params, hgp.train.x, xstar);
  LogNoise out;
  out.mean = hgp.noise.mean(xstar) + kx.transpose() * hgp.q.nu;
  const Eigen::MatrixXd v = hgp.c_factor.solve_lower(hgp.s.asDiagonal() * kx);
  out.var = (eval_diag(hgp.noise.kernel, hgp.noise.params, xstar) - v.colwise().squaredNorm().transpose()).cwiseMax(0.0);
  return out;
}

Posterior predict_vhgp(const HGPState& hgp, const Inputs& xstar) {
  check_columns(hgp.kernel, xstar);
  const Eigen::Index m = xstar.rows();
  Posterior p;
  p.mean.resize(m);
  p.var_latent.resize(m);
  p.var_noisy.resize(m);
  for (Eigen::Index start = 0; start < m; start += kPredictBlock) {
    const Eigen::Index len = std::min(kPredictBlock, m - start);
    std::vector<std::size_t> rows(static_cast<std::size_t>(len));
    for (Eigen::Index i = 0; i < len; ++i) rows[static_cast<std::size_t>(i)] = static_cast<std::size_t>(start + i);
    const Inputs block = xstar.select_rows(rows);
    const Eigen::MatrixXd ks = eval_kernel(hgp.kernel, hgp.params, hgp.train.x, block);
    p.mean.segment(start, len).noalias() = ks.transpose() * hgp.beta;
    const Eigen::MatrixXd v = hgp.a_factor.solve_lower(ks);
    const Eigen::VectorXd kss = eval_diag(hgp.kernel, hgp.params, block);
    p.var_latent.segment(start, len) = (kss - v.colwise().squaredNorm().transpose()).cwiseMax(0.0);
    const LogNoise g = predict_log_noise(hgp, block);
    p.var_noisy.segment(start, len) =
        p.var_latent.segment(start, len).array() + (g.mean + 0.5 * g.var).array().exp();
  }
  return p;
}

}  // namespace cpk
