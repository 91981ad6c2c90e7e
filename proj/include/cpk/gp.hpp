#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string_view>

#include "cpk/dataset.hpp"
#include "cpk/kernel_expr.hpp"
#include "cpk/linalg.hpp"
#include "cpk/optim.hpp"
#include "cpk/params.hpp"

namespace cpk {

// Name of the observation-noise variance entry. It lives in the same
// ParamVector as the kernel hyperparameters but no kernel leaf reads it.
inline constexpr std::string_view kNoiseParam = "noise.variance";

// Adds the noise entry (log transform) if missing.
std::size_t add_noise_param(ParamVector& params, double value, double lower, double upper);

// Negative log marginal likelihood of zero-mean GP regression,
//   0.5 y^T a + sum_i log L_ii + (N/2) log 2 pi,  a = (K + s2 I)^{-1} y.
double nlml(const KernelExpr& expr, const ParamVector& params, double noise_variance, const Dataset& data);

struct NlmlResult {
  double value = 0.0;
  Eigen::VectorXd gradient;  // per free parameter of `params`, transformed space
};

// NLML and its gradient. The noise variance is read from the kNoiseParam
// entry of `params`; that entry's gradient component is filled when it is
// free. Components use  dNLML/dt = -0.5 tr((a a^T - K_y^{-1}) dK_y/dt).
NlmlResult nlml_with_grad(const KernelExpr& expr, const ParamVector& params, const Dataset& data);

Eigen::VectorXd nlml_grad(const KernelExpr& expr, const ParamVector& params, const Dataset& data);

// NLML over the free entries of a copy of `params`, in transformed space.
// `expr` and `data` are captured by reference.
Objective nlml_objective(const KernelExpr& expr, const ParamVector& params, const Dataset& data);

// Trained exact GP. Immutable after construction.
struct GPState {
  KernelExpr kernel;
  ParamVector params;  // includes kNoiseParam
  Dataset train;
  Cholesky factor;     // of K + s2 I (+ jitter)
  Eigen::VectorXd alpha;

  double noise_variance() const;
};

// Factorises the training covariance at the given parameters.
GPState make_state(KernelExpr kernel, ParamVector params, Dataset train);

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd var_latent;
  Eigen::VectorXd var_noisy;  // var_latent + observation noise
};

// mean = K_*^T a, latent var = k_** - v^T v with v = L^{-1} K_*. Test
// points are processed in blocks to bound memory.
Posterior predict(const GPState& state, const Inputs& xstar);

// n_draws prior samples at xstar; column d is draw d. Reproducible by seed.
Eigen::MatrixXd sample_prior(const KernelExpr& expr, const ParamVector& params, const Inputs& xstar, int n_draws,
                             std::uint64_t seed);

struct GpFit {
  GPState state;
  FitReport report;
};

// Minimises the NLML over every free entry of `params` (kernel and noise)
// and returns the state at the best restart.
GpFit fit_gp(const KernelExpr& expr, const ParamVector& params, const Dataset& data, const OptConfig& config);

// Target standardisation applied around the zero-mean GP.
struct TargetScaler {
  double mean = 0.0;
  double scale = 1.0;

  static TargetScaler fit(const Eigen::VectorXd& y);
  Eigen::VectorXd apply(const Eigen::VectorXd& y) const;
  Eigen::VectorXd invert_mean(const Eigen::VectorXd& m) const;
  Eigen::VectorXd invert_variance(const Eigen::VectorXd& v) const;
};

}  // namespace cpk
