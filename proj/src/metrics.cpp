#include "cpk/metrics.hpp"

#include <cmath>
#include <numbers>

#include "cpk/error.hpp"

namespace cpk {

namespace {

double neg_log_density(double y, double mean, double var) {
  const double r = y - mean;
  return 0.5 * std::log(2.0 * std::numbers::pi * var) + 0.5 * r * r / var;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= static_cast<std::size_t>(v.size())) throw InvalidArgument("region index out of range");
    out[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(idx[k])];
  }
  return out;
}

}  // namespace

double nmse(const Eigen::Ref<const Eigen::VectorXd>& y_true, const Eigen::Ref<const Eigen::VectorXd>& y_pred) {
  if (y_true.size() != y_pred.size()) throw InvalidArgument("nmse: length mismatch");
  if (y_true.size() < 2) throw InvalidArgument("nmse needs at least two points");
  if (!y_true.allFinite() || !y_pred.allFinite()) throw InvalidArgument("nmse: non-finite input");
  const double n = static_cast<double>(y_true.size());
  const double mean = y_true.mean();
  const double var = (y_true.array() - mean).square().sum() / n;
  if (!(var > 0.0)) throw DataError("nmse: targets have zero variance");
  return 100.0 * (y_true - y_pred).squaredNorm() / (n * var);
}

double msll(const Eigen::Ref<const Eigen::VectorXd>& y_true, const Eigen::Ref<const Eigen::VectorXd>& pred_mean,
            const Eigen::Ref<const Eigen::VectorXd>& pred_var, double train_mean, double train_var) {
  if (y_true.size() != pred_mean.size() || y_true.size() != pred_var.size())
    throw InvalidArgument("msll: length mismatch");
  if (y_true.size() == 0) throw InvalidArgument("msll needs at least one point");
  if (!(train_var > 0.0) || !std::isfinite(train_var)) throw InvalidArgument("msll: training variance must be positive");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < y_true.size(); ++i) {
    if (!(pred_var[i] > 0.0) || !std::isfinite(pred_var[i]))
      throw InvalidArgument("msll: predictive variance must be positive");
    acc += neg_log_density(y_true[i], pred_mean[i], pred_var[i]) - neg_log_density(y_true[i], train_mean, train_var);
  }
  return acc / static_cast<double>(y_true.size());
}

ScoreReport score(const Eigen::VectorXd& y_true, const Eigen::VectorXd& pred_mean, const Eigen::VectorXd& pred_var,
                  double train_mean, double train_var, const std::vector<Region>& regions) {
  ScoreReport r;
  r.n = static_cast<std::size_t>(y_true.size());
  r.nmse = nmse(y_true, pred_mean);
  r.msll = msll(y_true, pred_mean, pred_var, train_mean, train_var);
  for (const auto& reg : regions) {
    const Eigen::VectorXd yt = gather(y_true, reg.indices);
    const Eigen::VectorXd pm = gather(pred_mean, reg.indices);
    const Eigen::VectorXd pv = gather(pred_var, reg.indices);
    r.regions.push_back({reg.name, reg.indices.size(), nmse(yt, pm), msll(yt, pm, pv, train_mean, train_var)});
  }
  return r;
}

}  // namespace cpk
