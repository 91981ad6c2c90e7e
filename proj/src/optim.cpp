#include "cpk/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>

#include "cpk/error.hpp"
#include "cpk/rng.hpp"

namespace cpk {

void OptConfig::validate() const {
  if (restarts < 1) throw ConfigError("optimizer needs at least one restart");
  if (max_iterations < 1) throw ConfigError("optimizer needs max_iterations >= 1");
  if (!(gradient_tolerance > 0.0) || !(relative_tolerance > 0.0))
    throw ConfigError("optimizer tolerances must be positive");
  if (memory < 1) throw ConfigError("L-BFGS memory must be >= 1");
  if (!(max_step > 0.0) || !(armijo > 0.0 && armijo < 1.0) || max_backtracks < 1)
    throw ConfigError("invalid line-search settings");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const Objective& f, const Eigen::VectorXd& t, Eigen::VectorXd* g) {
  try {
    const double v = f(t, g);
    if (!std::isfinite(v)) return kInf;
    if (g != nullptr && !g->allFinite()) return kInf;
    return v;
  } catch (const NumericalError&) {
    return kInf;
  } catch (const DomainError&) {
    return kInf;
  }
}

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Zero out gradient components that point out of the feasible box.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] <= lo[i] && g[i] > 0.0) pg[i] = 0.0;
    if (x[i] >= hi[i] && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

struct Pair {
  Eigen::VectorXd s, y;
  double rho;
};

// Two-loop recursion: returns H * q.
Eigen::VectorXd apply_inverse_hessian(const std::deque<Pair>& mem, Eigen::VectorXd q) {
  std::vector<double> alpha(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    alpha[k] = mem[k].rho * mem[k].s.dot(q);
    q -= alpha[k] * mem[k].y;
  }
  if (!mem.empty()) {
    const auto& last = mem.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const double beta = mem[k].rho * mem[k].y.dot(q);
    q += (alpha[k] - beta) * mem[k].s;
  }
  return q;
}

RestartTrace run_restart(const Objective& f, Eigen::VectorXd x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                         const OptConfig& cfg) {
  RestartTrace tr;
  x = project(x, lo, hi);
  tr.start = x;
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n);
  double fx = safe_eval(f, x, &g);
  if (!std::isfinite(fx)) {
    tr.failed = true;
    tr.final_point = x;
    tr.final_value = kInf;
    tr.message = "objective not finite at start";
    return tr;
  }
  tr.trajectory.push_back(fx);
  if (n == 0) {
    tr.converged = true;
    tr.final_point = x;
    tr.final_value = fx;
    tr.message = "no free parameters";
    return tr;
  }

  std::deque<Pair> mem;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const Eigen::VectorXd pg = projected_gradient(x, g, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() <= cfg.gradient_tolerance) {
      tr.converged = true;
      tr.message = "projected gradient below tolerance";
      break;
    }
    // Quasi-Newton direction restricted to the free set.
    Eigen::VectorXd d = -apply_inverse_hessian(mem, pg);
    for (Eigen::Index i = 0; i < n; ++i)
      if (pg[i] == 0.0) d[i] = 0.0;
    if (!(d.dot(pg) < 0.0) || !d.allFinite()) {
      mem.clear();
      d = -pg;
    }
    double step = 1.0;
    if (mem.empty()) step = std::min(1.0, 1.0 / pg.lpNorm<Eigen::Infinity>());
    const double dmax = d.lpNorm<Eigen::Infinity>() * step;
    if (dmax > cfg.max_step) step *= cfg.max_step / dmax;

    bool accepted = false;
    Eigen::VectorXd x_new, g_new(n);
    double f_new = kInf;
    for (int bt = 0; bt < cfg.max_backtracks; ++bt) {
      x_new = project(x + step * d, lo, hi);
      const double decrease = g.dot(x_new - x);
      if ((x_new - x).lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = safe_eval(f, x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= fx + cfg.armijo * std::min(decrease, 0.0) && f_new <= fx) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!mem.empty()) {
        // Retry from steepest descent before giving up.
        mem.clear();
        continue;
      }
      tr.converged = pg.lpNorm<Eigen::Infinity>() <= 1e3 * cfg.gradient_tolerance;
      tr.message = "line search failed";
      break;
    }
    Pair p{x_new - x, g_new - g, 0.0};
    const double sy = p.s.dot(p.y);
    if (sy > 1e-12 * p.s.norm() * p.y.norm() && sy > 0.0) {
      p.rho = 1.0 / sy;
      mem.push_back(std::move(p));
      if (static_cast<int>(mem.size()) > cfg.memory) mem.pop_front();
    }
    const double f_old = fx;
    x = x_new;
    g = g_new;
    fx = f_new;
    tr.trajectory.push_back(fx);
    tr.iterations = iter + 1;
    if (std::abs(f_old - fx) <= cfg.relative_tolerance * std::max({1.0, std::abs(f_old), std::abs(fx)})) {
      tr.converged = true;
      tr.message = "relative objective change below tolerance";
      break;
    }
  }
  if (tr.message.empty()) tr.message = "iteration limit reached";
  tr.final_point = x;
  tr.final_value = fx;
  return tr;
}

}  // namespace

FitReport minimize(const Objective& objective, const ParamVector& params, const OptConfig& config) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const Eigen::VectorXd lo = params.free_lower_transformed();
  const Eigen::VectorXd hi = params.free_upper_transformed();
  const Eigen::VectorXd x0 = params.free_transformed();

  FitReport report;
  report.best_value = kInf;
  for (int r = 0; r < config.restarts; ++r) {
    Eigen::VectorXd start = x0;
    if (r > 0) {
      Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(r));
      for (Eigen::Index i = 0; i < start.size(); ++i) start[i] = rng.uniform(lo[i], hi[i]);
    }
    RestartTrace tr = run_restart(objective, start, lo, hi, config);
    // Strict comparison keeps the earliest restart on ties.
    if (!tr.failed && tr.final_value < report.best_value) {
      report.best_value = tr.final_value;
      report.best_restart = static_cast<std::size_t>(r);
    }
    report.restarts.push_back(std::move(tr));
  }
  if (!std::isfinite(report.best_value))
    throw OptimizationError("no optimizer restart produced a finite objective");

  const RestartTrace& best = report.restarts[report.best_restart];
  report.params = params;
  report.params.set_free_transformed(best.final_point);
  report.converged = best.converged;
  const auto names = params.free_names();
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (best.final_point[i] <= lo[i] || best.final_point[i] >= hi[i])
      report.active_bounds.push_back(names[static_cast<std::size_t>(i)]);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

FdReport fd_check(const Objective& objective, const ParamVector& params, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  const Eigen::VectorXd t = params.free_transformed();
  Eigen::VectorXd g(t.size());
  objective(t, &g);
  const auto names = params.free_names();

  FdReport rep;
  Eigen::VectorXd numeric(t.size());
  for (Eigen::Index k = 0; k < t.size(); ++k) {
    const double step = h * std::max(1.0, std::abs(t[k]));
    Eigen::VectorXd tp = t, tm = t;
    tp[k] += step;
    tm[k] -= step;
    numeric[k] = (objective(tp, nullptr) - objective(tm, nullptr)) / (2.0 * step);
  }
  const double floor = std::max(1e-3 * (t.size() > 0 ? numeric.lpNorm<Eigen::Infinity>() : 0.0), 1e-10);
  for (Eigen::Index k = 0; k < t.size(); ++k) {
    FdEntry e{names[static_cast<std::size_t>(k)], g[k], numeric[k], 0.0};
    e.relative_error = std::abs(e.analytic - e.numeric) / std::max(std::abs(e.numeric), floor);
    if (e.relative_error > rep.max_relative_error || rep.entries.empty()) {
      if (e.relative_error >= rep.max_relative_error) {
        rep.max_relative_error = e.relative_error;
        rep.worst = static_cast<std::size_t>(k);
      }
    }
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

}  // namespace cpk
