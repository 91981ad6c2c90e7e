#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace cpk {

// Normalised mean squared error in percent:
//   100 * sum (y - yhat)^2 / (N * var(y)),  var = population variance.
// Throws DataError for zero-variance targets, InvalidArgument for length
// mismatches or N < 2.
double nmse(const Eigen::Ref<const Eigen::VectorXd>& y_true, const Eigen::Ref<const Eigen::VectorXd>& y_pred);

// Mean standardised log loss:
//   (1/N) sum [ -log N(y_i; mu_i, v_i) + log N(y_i; train_mean, train_var) ].
// Zero for the trivial predictor (mu = train_mean, v = train_var).
double msll(const Eigen::Ref<const Eigen::VectorXd>& y_true, const Eigen::Ref<const Eigen::VectorXd>& pred_mean,
            const Eigen::Ref<const Eigen::VectorXd>& pred_var, double train_mean, double train_var);

struct RegionScore {
  std::string name;
  std::size_t n = 0;
  double nmse = 0.0;  // normalised by the region's own target variance
  double msll = 0.0;
};

struct ScoreReport {
  std::size_t n = 0;
  double nmse = 0.0;
  double msll = 0.0;
  std::vector<RegionScore> regions;
};

struct Region {
  std::string name;
  std::vector<std::size_t> indices;  // into the scored vectors
};

ScoreReport score(const Eigen::VectorXd& y_true, const Eigen::VectorXd& pred_mean, const Eigen::VectorXd& pred_var,
                  double train_mean, double train_var, const std::vector<Region>& regions = {});

}  // namespace cpk
