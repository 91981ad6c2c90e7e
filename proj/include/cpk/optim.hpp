#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cpk/params.hpp"

namespace cpk {

// Objective over the free parameters in transformed space. Fills `grad` when
// it is non-null. May throw NumericalError / DomainError, which the
// optimizer treats as an infinite objective.
using Objective = std::function<double(const Eigen::VectorXd& t, Eigen::VectorXd* grad)>;

struct OptConfig {
  int restarts = 5;
  int max_iterations = 200;
  double gradient_tolerance = 1e-5;   // on the projected gradient, inf-norm
  double relative_tolerance = 1e-10;  // on successive objective values
  int memory = 10;                    // L-BFGS history length
  double max_step = 5.0;              // max change of any coordinate per step
  double armijo = 1e-4;
  int max_backtracks = 40;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct RestartTrace {
  Eigen::VectorXd start;           // transformed free parameters
  Eigen::VectorXd final_point;
  std::vector<double> trajectory;  // objective after each accepted step (first entry = start)
  double final_value = 0.0;
  int iterations = 0;
  bool converged = false;
  bool failed = false;  // objective not finite at the start
  std::string message;
};

struct FitReport {
  double best_value = 0.0;
  std::size_t best_restart = 0;
  ParamVector params;  // values of the best restart
  std::vector<RestartTrace> restarts;
  std::vector<std::string> active_bounds;  // free parameters sitting on a bound
  bool converged = false;
  double seconds = 0.0;
};

// Bounded multi-start quasi-Newton minimisation in the transformed space of
// `params`. Restart 0 starts from the current values; restart k > 0 starts
// from a point drawn uniformly inside the transformed bounds with a stream
// that depends only on (seed, k). Each restart runs projected L-BFGS with
// an Armijo backtracking line search along the projected path, so accepted
// objective values never increase. Throws OptimizationError if no restart
// yields a finite objective.
FitReport minimize(const Objective& objective, const ParamVector& params, const OptConfig& config);

struct FdEntry {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct FdReport {
  double max_relative_error = 0.0;
  std::size_t worst = 0;
  std::vector<FdEntry> entries;
};

// Central-difference check of the objective's gradient at the current
// values of `params`. Coordinate k is perturbed by h * max(1, |t_k|).
// The relative error is |analytic - numeric| / max(|numeric|,
// 1e-3 * max_j |numeric_j|, 1e-10).
FdReport fd_check(const Objective& objective, const ParamVector& params, double h);

}  // namespace cpk
