#pragma once

#include <Eigen/Core>

#include <vector>

#include "cpk/dataset.hpp"
#include "cpk/gp.hpp"
#include "cpk/kernel_expr.hpp"
#include "cpk/linalg.hpp"
#include "cpk/optim.hpp"
#include "cpk/params.hpp"

namespace cpk {

// Latent log-noise process g ~ GP(H b, K_g). K_g is an SE kernel over the
// z-scored features in `inputs`; the mean is linear in the same features.
// Parameter names:
//   noise_gp.variance, noise_gp.lengthscale[<label>],
//   noise_gp.mean[<label>], noise_gp.mean.intercept
struct NoiseModel {
  std::vector<ColumnBinding> inputs;
  KernelExpr kernel;
  ParamVector params;

  Eigen::MatrixXd design(const Inputs& x) const;  // [features, 1]
  Eigen::VectorXd mean(const Inputs& x) const;
};

// Uses the distinct switch and SE bindings of `signal`, standardised on `x`.
// Lengthscales are bounded to [0.1, 10] z-scored units.
NoiseModel make_noise_model(const KernelExpr& signal, const Inputs& x);

// q(g) = N(mu, Sigma), Sigma = (K_g^{-1} + 2 diag(lambda))^{-1},
// mu = m_g + K_g nu.
struct VariationalState {
  Eigen::VectorXd nu;
  Eigen::VectorXd lambda;
  Eigen::VectorXd mu;      // derived
  Eigen::VectorXd sigma;   // diag(Sigma), derived
};

struct HGPState {
  KernelExpr kernel;
  ParamVector params;  // signal kernel only
  NoiseModel noise;
  VariationalState q;
  Dataset train;
  double bound = 0.0;

  // Caches for prediction.
  Cholesky a_factor;           // K_f + R
  Eigen::VectorXd beta;        // (K_f + R)^{-1} y
  Cholesky c_factor;           // I + S K_g S
  Eigen::VectorXd s;           // sqrt(2 lambda)

  // e^{mu_i - Sigma_ii / 2} at the training inputs.
  Eigen::VectorXd pointwise_noise() const;
};

// Builds the caches and bound value. q.nu and q.lambda must be set.
HGPState make_hgp_state(KernelExpr kernel, ParamVector params, NoiseModel noise, VariationalState q, Dataset train);

// F = log N(y | 0, K_f + R) - tr(Sigma)/4 - KL(N(mu, Sigma) || N(m_g, K_g)),
// R = diag(e^{mu - diag(Sigma)/2}).
double mv_bound(const HGPState& hgp, const Dataset& data);

struct BoundGradient {
  double value = 0.0;
  Eigen::VectorXd signal;      // free entries of the signal params, transformed
  Eigen::VectorXd noise;       // free entries of the noise params, transformed
  Eigen::VectorXd nu;
  Eigen::VectorXd log_lambda;  // with respect to log(lambda)
};

BoundGradient mv_bound_with_grad(const KernelExpr& kernel, const ParamVector& params, const NoiseModel& noise,
                                 const Eigen::VectorXd& nu, const Eigen::VectorXd& lambda, const Dataset& data);

struct VhgpConfig {
  OptConfig prefit;      // homoscedastic GP used for initialisation
  OptConfig optimizer;   // joint ascent on the bound; restarts beyond the first are ignored
  double lambda0 = 0.5;
  double residual_floor = 1e-6;

  VhgpConfig();
};

struct VhgpFit {
  HGPState state;
  FitReport report;         // objective is -F
  GpFit prefit;
  double initial_bound = 0.0;
};

// `params` holds the signal hyperparameters plus kNoiseParam for the
// homoscedastic pre-fit. Initial mu smooths the log squared residuals of
// that pre-fit with the noise GP.
VhgpFit fit_vhgp(const KernelExpr& kernel, const ParamVector& params, const Dataset& data, const VhgpConfig& config);

// mean = K_*^T (K_f + R)^{-1} y; var_noisy = latent variance + e^{mu_* + s_*^2/2}.
Posterior predict_vhgp(const HGPState& hgp, const Inputs& xstar);

// Mean and variance of the latent log-noise at xstar.
struct LogNoise {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};
LogNoise predict_log_noise(const HGPState& hgp, const Inputs& xstar);

}  // namespace cpk
