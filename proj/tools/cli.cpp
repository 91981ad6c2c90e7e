#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "cpk/error.hpp"
#include "cpk/io.hpp"
#include "cpk/kernels.hpp"
#include "cpk/metrics.hpp"
#include "cpk/rng.hpp"
#include "cpk/synth.hpp"

namespace cpk::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

OptConfig parse_optimizer(const json& j, OptConfig cfg, const std::string& where) {
  check_keys(j, {"restarts", "max_iterations", "gradient_tolerance", "relative_tolerance", "memory", "max_step"},
             where);
  read(j, "restarts", cfg.restarts);
  read(j, "max_iterations", cfg.max_iterations);
  read(j, "gradient_tolerance", cfg.gradient_tolerance);
  read(j, "relative_tolerance", cfg.relative_tolerance);
  read(j, "memory", cfg.memory);
  read(j, "max_step", cfg.max_step);
  cfg.validate();
  return cfg;
}

ParamOverride parse_override(const json& j, const std::string& name) {
  ParamOverride o;
  if (j.is_number()) {
    o.value = j.get<double>();
    return o;
  }
  check_keys(j, {"value", "lower", "upper", "fixed"}, "params." + name);
  if (j.contains("value")) o.value = j["value"].get<double>();
  if (j.contains("lower")) o.lower = j["lower"].get<double>();
  if (j.contains("upper")) o.upper = j["upper"].get<double>();
  read(j, "fixed", o.fixed);
  return o;
}

std::map<std::string, ParamOverride> parse_overrides(const json& j) {
  std::map<std::string, ParamOverride> out;
  if (!j.is_object()) throw ConfigError("'params' must be an object");
  for (const auto& [k, v] : j.items()) out[k] = parse_override(v, k);
  return out;
}

std::vector<RegionSpec> parse_regions(const json& j) {
  std::vector<RegionSpec> out;
  if (!j.is_array()) throw ConfigError("'regions' must be an array");
  for (const auto& r : j) {
    check_keys(r, {"name", "column", "lo", "hi"}, "regions");
    RegionSpec s;
    try {
      s.name = r.at("name").get<std::string>();
      s.column = r.at("column").get<std::string>();
      s.lo = r.at("lo").get<double>();
      s.hi = r.at("hi").get<double>();
    } catch (const json::exception&) {
      throw ConfigError("each region needs name, column, lo and hi");
    }
    out.push_back(s);
  }
  return out;
}

json regions_to_json(const std::vector<RegionSpec>& regions) {
  json out = json::array();
  for (const auto& r : regions) out.push_back({{"name", r.name}, {"column", r.column}, {"lo", r.lo}, {"hi", r.hi}});
  return out;
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read '" + path.string() + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir.string() + "'");
}

json params_json(const ParamVector& p) {
  json out = json::object();
  for (const auto& e : p.entries()) out[e.name] = e.value;
  return out;
}

// ---------------------------------------------------------------------------
// Shared model setup

struct Split {
  Dataset train;
  Dataset test;
  bool has_test = false;
};

Split split_dataset(const Dataset& all, const RunConfig& cfg) {
  Split s;
  const auto n = static_cast<std::size_t>(all.size());
  std::vector<std::size_t> train, test;
  if (cfg.decimate > 1) {
    for (std::size_t i = 0; i < n; ++i) (i % static_cast<std::size_t>(cfg.decimate) == 0 ? train : test).push_back(i);
  } else if (cfg.train_frac < 1.0) {
    std::tie(train, test) = random_split(n, cfg.train_frac, cfg.seed);
  } else {
    s.train = all;
    return s;
  }
  if (train.empty()) throw DataError("training split is empty");
  s.train = all.select_rows(train);
  s.test = all.select_rows(test);
  s.has_test = !test.empty();
  return s;
}

struct Setup {
  KernelExpr kernel;
  ParamVector params;  // includes the noise entry
  TargetScaler scaler;
  Dataset train;       // standardised targets
};

Setup make_setup(const RunConfig& cfg, const Dataset& train) {
  if (cfg.kernel.empty()) throw ConfigError("config has no 'kernel'");
  Setup s;
  s.kernel = build_kernel(parse_kernel_spec(cfg.kernel), s.params, &train.x, cfg.groups);
  if (cfg.standardize_inputs) standardize_se_inputs(s.kernel, train.x);
  add_noise_param(s.params, cfg.noise_init, cfg.noise_lower, cfg.noise_upper);
  apply_overrides(s.params, cfg.params);
  s.scaler = TargetScaler::fit(train.y);
  s.train = train;
  s.train.y = s.scaler.apply(train.y);
  return s;
}

Dataset load_data(const RunConfig& cfg, const std::optional<fs::path>& override_path) {
  const fs::path p = override_path ? *override_path : cfg.resolve(cfg.data);
  if (p.empty()) throw ConfigError("no data file given (config 'data' or --data)");
  const Table t = read_csv(p);
  std::vector<std::string> inputs = cfg.inputs;
  if (inputs.empty())
    for (const auto& c : t.columns)
      if (c != cfg.target) inputs.push_back(c);
  return to_dataset(t, inputs, cfg.target);
}

Table dataset_table(const Dataset& d, const std::string& target) {
  Table t{d.x.columns, Eigen::MatrixXd(d.size(), d.x.values.cols() + 1)};
  t.columns.push_back(target);
  t.values << d.x.values, d.y;
  return t;
}

json report_json(const FitReport& r) {
  json restarts = json::array();
  for (const auto& t : r.restarts)
    restarts.push_back({{"final_value", t.failed ? json(nullptr) : json(t.final_value)},
                        {"iterations", t.iterations},
                        {"converged", t.converged},
                        {"failed", t.failed},
                        {"message", t.message}});
  return {{"best_value", r.best_value},
          {"best_restart", r.best_restart},
          {"converged", r.converged},
          {"active_bounds", r.active_bounds},
          {"restarts", restarts}};
}

// ---------------------------------------------------------------------------
// Commands

struct Common {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> train_frac;
  std::optional<int> decimate;
};

RunConfig load_config(const Common& c, bool required) {
  RunConfig cfg;
  if (!c.config.empty())
    cfg = RunConfig::load(c.config);
  else if (required)
    throw ConfigError("--config is required");
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.optimizer.seed = *c.seed;
    cfg.vhgp.prefit.seed = *c.seed;
    cfg.vhgp.optimizer.seed = *c.seed;
  }
  if (c.train_frac) {
    if (!(*c.train_frac > 0.0 && *c.train_frac <= 1.0)) throw ConfigError("--train-frac must lie in (0, 1]");
    cfg.train_frac = *c.train_frac;
  }
  if (c.decimate) {
    if (*c.decimate < 1) throw ConfigError("--decimate must be >= 1");
    cfg.decimate = *c.decimate;
  }
  return cfg;
}

void cmd_fit(const Common& c, const std::optional<fs::path>& data_path) {
  const RunConfig cfg = load_config(c, true);
  const Dataset all = load_data(cfg, data_path);
  const Split split = split_dataset(all, cfg);
  Setup s = make_setup(cfg, split.train);
  const fs::path out(c.out);
  prepare_out(out);

  const auto t0 = std::chrono::steady_clock::now();
  Model m;
  m.kernel_text = cfg.kernel;
  m.groups = cfg.groups;
  m.inputs = all.x.columns;
  m.target = cfg.target;
  m.scaler = s.scaler;
  json report;
  if (cfg.heteroscedastic) {
    if (cfg.fit_subset && cfg.fit_subset < static_cast<std::size_t>(s.train.size()))
      throw ConfigError("fit_subset is not supported with heteroscedastic noise");
    const VhgpFit f = fit_vhgp(s.kernel, s.params, s.train, cfg.vhgp);
    m.hgp = f.state;
    report = report_json(f.report);
    report["bound"] = f.state.bound;
    report["initial_bound"] = f.initial_bound;
    report["prefit"] = report_json(f.prefit.report);
    report["params"] = params_json(f.state.params);
    report["noise_params"] = params_json(f.state.noise.params);
  } else {
    Dataset fit_data = s.train;
    const auto n = static_cast<std::size_t>(s.train.size());
    if (cfg.fit_subset && cfg.fit_subset < n) {
      // Hyperparameters from a subset; conditioning uses every row.
      if (cfg.fit_block > 0) {
        fit_data = s.train.select_rows(block_subset(n, cfg.fit_subset, cfg.fit_block, cfg.seed));
      } else {
        auto [sub, rest] = random_split(n, static_cast<double>(cfg.fit_subset) / static_cast<double>(n), cfg.seed);
        fit_data = s.train.select_rows(sub);
      }
    }
    const GpFit f = fit_gp(s.kernel, s.params, fit_data, cfg.optimizer);
    m.gp = make_state(s.kernel, f.state.params, s.train);
    report = report_json(f.report);
    report["fit_rows"] = fit_data.size();
    report["params"] = params_json(f.state.params);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report["noise_model"] = cfg.heteroscedastic ? "heteroscedastic" : "homoscedastic";
  report["kernel"] = cfg.kernel;
  report["train_rows"] = s.train.size();
  report["test_rows"] = split.has_test ? split.test.size() : 0;
  json sw = json::array();
  for (const auto& info : switches(m.kernel()))
    sw.push_back({{"tag", info.tag},
                  {"input", info.input.label()},
                  {"a", m.params()[info.a_slot].value},
                  {"x0", m.params()[info.x0_slot].value}});
  report["switches"] = sw;
  report["metadata"] = {{"seconds", secs}, {"library_version", CPK_VERSION}};

  save_model(out / "model.json", m);
  write_json(out / "fit_report.json", report);
  if (split.has_test) {
    write_csv(out / "train.csv", dataset_table(split.train, cfg.target));
    write_csv(out / "test.csv", dataset_table(split.test, cfg.target));
  }
  std::cout << "fit: objective " << report["best_value"].get<double>() << ", model written to "
            << (out / "model.json").string() << "\n";
}

void cmd_predict(const Common& c, const std::string& model_path, const std::string& data_path) {
  const Model m = load_model(fs::path(model_path));
  const Table t = read_csv(data_path);
  Inputs x;
  x.columns = m.inputs;
  x.values.resize(t.values.rows(), static_cast<Eigen::Index>(m.inputs.size()));
  for (std::size_t j = 0; j < m.inputs.size(); ++j) x.values.col(static_cast<Eigen::Index>(j)) = t.column(m.inputs[j]);
  x.validate();
  const Posterior p = m.predict(x);

  Table out{x.columns, Eigen::MatrixXd()};
  const bool has_target = std::find(t.columns.begin(), t.columns.end(), m.target) != t.columns.end();
  const Eigen::Index extra = has_target ? 4 : 3;
  out.values.resize(x.rows(), x.values.cols() + extra);
  out.values.leftCols(x.values.cols()) = x.values;
  Eigen::Index k = x.values.cols();
  if (has_target) {
    out.columns.push_back(m.target);
    out.values.col(k++) = t.column(m.target);
  }
  out.columns.insert(out.columns.end(), {"mean", "std_latent", "std_total"});
  out.values.col(k++) = p.mean;
  out.values.col(k++) = p.var_latent.cwiseMax(0.0).cwiseSqrt();
  out.values.col(k++) = p.var_noisy.cwiseMax(0.0).cwiseSqrt();
  prepare_out(c.out);
  write_csv(fs::path(c.out) / "predictions.csv", out);
  std::cout << "predict: " << x.rows() << " rows written to " << (fs::path(c.out) / "predictions.csv").string()
            << "\n";
}

// sigma(z) over the observed range of each switch input.
void write_switch_curves(const Model& m, const fs::path& out, int points) {
  const Dataset& train = m.train();
  for (const auto& info : switches(m.kernel())) {
    const Eigen::Index c = static_cast<Eigen::Index>(train.x.index(info.input.column));
    double lo = INFINITY, hi = -INFINITY;
    for (Eigen::Index i = 0; i < train.x.rows(); ++i) {
      const double f = info.input.apply(train.x.values(i, c));
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
    const double a = m.params()[info.a_slot].value, x0 = m.params()[info.x0_slot].value;
    Table t{{"z", "sigma_pos", "sigma_neg"}, Eigen::MatrixXd(points, 3)};
    for (int k = 0; k < points; ++k) {
      const double z = points > 1 ? lo + (hi - lo) * k / (points - 1) : lo;
      t.values.row(k) << z, sigmoid(z, a, x0), sigmoid_neg(z, a, x0);
    }
    write_csv(out / ("switch_" + info.tag + ".csv"), t);
  }
}

void cmd_evaluate(const Common& c, const std::string& pred_path, const std::string& train_path,
                  const std::string& model_path, const std::string& regions_path, bool curves) {
  const RunConfig cfg = load_config(c, false);
  const Table p = read_csv(pred_path);
  std::optional<Model> model;
  if (!model_path.empty()) model = load_model(fs::path(model_path));
  const std::string target = model ? model->target : cfg.target;

  Eigen::VectorXd train_y;
  if (!train_path.empty())
    train_y = read_csv(train_path).column(target);
  else if (model)
    train_y = model->scaler.invert_mean(model->train().y);
  else
    throw ConfigError("evaluate needs --train or --model for the trivial-predictor statistics");
  if (train_y.size() < 1) throw DataError("training targets are empty");
  const double tm = train_y.mean();
  const double tv = (train_y.array() - tm).square().mean();

  std::vector<RegionSpec> specs = cfg.regions;
  if (!regions_path.empty()) {
    const json r = read_json(regions_path);
    specs = parse_regions(r.is_object() ? r.at("regions") : r);
  }
  std::vector<Region> regions;
  for (const auto& s : specs) {
    const Eigen::VectorXd col = p.column(s.column);
    Region r{s.name, {}};
    for (Eigen::Index i = 0; i < col.size(); ++i)
      if (col[i] >= s.lo && col[i] <= s.hi) r.indices.push_back(static_cast<std::size_t>(i));
    regions.push_back(std::move(r));
  }
  const Eigen::VectorXd sd = p.column("std_total");
  const ScoreReport s = score(p.column(target), p.column("mean"), sd.cwiseProduct(sd), tm, tv, regions);

  json rj = json::array();
  for (std::size_t k = 0; k < s.regions.size(); ++k)
    rj.push_back({{"name", s.regions[k].name},
                  {"column", specs[k].column},
                  {"lo", specs[k].lo},
                  {"hi", specs[k].hi},
                  {"n", s.regions[k].n},
                  {"nmse", s.regions[k].nmse},
                  {"msll", s.regions[k].msll}});
  const json report = {{"n", s.n}, {"nmse", s.nmse}, {"msll", s.msll}, {"train_mean", tm}, {"train_var", tv},
                       {"regions", rj}};
  prepare_out(c.out);
  write_json(fs::path(c.out) / "score_report.json", report);
  if (curves) {
    if (!model) throw ConfigError("--switch-curves needs --model");
    write_switch_curves(*model, c.out, 201);
  }
  std::cout << "evaluate: NMSE " << s.nmse << " %, MSLL " << s.msll << "\n";
}

// Synth generator settings from JSON.
RegimeSpec regime_spec(const json& j) {
  RegimeSpec s;
  check_keys(j, {"generator", "n", "speed_max", "dir_a", "dir_x0", "speed_a", "speed_x0", "alpha", "smooth_variance",
                 "smooth_lengthscale", "noise", "noise_std", "noise_slope"},
             "synth");
  read(j, "n", s.n);
  read(j, "speed_max", s.speed_max);
  read(j, "dir_a", s.dir_a);
  read(j, "dir_x0", s.dir_x0);
  read(j, "speed_a", s.speed_a);
  read(j, "speed_x0", s.speed_x0);
  read(j, "alpha", s.alpha);
  read(j, "smooth_variance", s.smooth_variance);
  read(j, "smooth_lengthscale", s.smooth_lengthscale);
  std::string noise = "constant";
  read(j, "noise", noise);
  if (noise == "linear")
    s.noise = NoiseKind::linear;
  else if (noise != "constant")
    throw ConfigError("synth.noise must be 'constant' or 'linear'");
  read(j, "noise_std", s.noise_std);
  read(j, "noise_slope", s.noise_slope);
  return s;
}

OscillatorSpec oscillator_spec(const json& j) {
  OscillatorSpec s;
  check_keys(j, {"generator", "duration", "sample_rate", "internal_rate", "modes", "gate_a", "gate_x0",
                 "turn_centres", "turn_peak", "turn_rate", "turn_hold", "rudder_wander", "channel_lengthscale",
                 "quasi_static_variance", "quasi_static_lengthscale", "noise_std", "decimate"},
             "synth");
  read(j, "duration", s.duration);
  read(j, "sample_rate", s.sample_rate);
  read(j, "internal_rate", s.internal_rate);
  if (j.contains("modes")) {
    s.modes.clear();
    for (const auto& m : j["modes"]) {
      check_keys(m, {"mass", "damping", "frequency_hz", "amplitude"}, "synth.modes");
      ModeSpec ms;
      read(m, "mass", ms.mass);
      read(m, "damping", ms.damping);
      read(m, "frequency_hz", ms.frequency_hz);
      read(m, "amplitude", ms.amplitude);
      s.modes.push_back(ms);
    }
  }
  read(j, "gate_a", s.gate_a);
  read(j, "gate_x0", s.gate_x0);
  read(j, "turn_centres", s.turn_centres);
  read(j, "turn_peak", s.turn_peak);
  read(j, "turn_rate", s.turn_rate);
  read(j, "turn_hold", s.turn_hold);
  read(j, "rudder_wander", s.rudder_wander);
  read(j, "channel_lengthscale", s.channel_lengthscale);
  read(j, "quasi_static_variance", s.quasi_static_variance);
  read(j, "quasi_static_lengthscale", s.quasi_static_lengthscale);
  read(j, "noise_std", s.noise_std);
  read(j, "decimate", s.decimate);
  return s;
}

ChangepointSpec changepoint_spec(const json& j) {
  ChangepointSpec s;
  check_keys(j, {"generator", "n", "lo", "hi", "a", "x0", "right_lengthscale", "left_lengthscale", "variance",
                 "noise_std"},
             "synth");
  read(j, "n", s.n);
  read(j, "lo", s.lo);
  read(j, "hi", s.hi);
  read(j, "a", s.a);
  read(j, "x0", s.x0);
  read(j, "right_lengthscale", s.right_lengthscale);
  read(j, "left_lengthscale", s.left_lengthscale);
  read(j, "variance", s.variance);
  read(j, "noise_std", s.noise_std);
  return s;
}

void cmd_synth(const Common& c) {
  const RunConfig cfg = load_config(c, true);
  const json& j = cfg.synth;
  if (!j.is_object()) throw ConfigError("config has no 'synth' section");
  const std::string gen = j.value("generator", "");
  Synthetic s;
  if (gen == "regime") {
    RegimeSpec spec = regime_spec(j);
    spec.seed = cfg.seed;
    s = gen_regime(spec);
  } else if (gen == "oscillator") {
    OscillatorSpec spec = oscillator_spec(j);
    spec.seed = cfg.seed;
    if (c.decimate) spec.decimate = *c.decimate;
    s = gen_oscillator(spec);
  } else if (gen == "changepoint") {
    ChangepointSpec spec = changepoint_spec(j);
    spec.seed = cfg.seed;
    s = gen_changepoint(spec);
  } else {
    throw ConfigError("synth.generator must be 'regime', 'oscillator' or 'changepoint'");
  }

  const fs::path out(c.out);
  prepare_out(out);
  write_csv(out / "data.csv", dataset_table(s.data, cfg.target));
  Table truth{s.truth.names, Eigen::MatrixXd(s.data.size(), static_cast<Eigen::Index>(s.truth.names.size()) + 3)};
  truth.columns.insert(truth.columns.end(), {"noiseless", "noise_std", "noise"});
  truth.values << s.truth.components, s.truth.noiseless, s.truth.noise_std, s.truth.noise;
  write_csv(out / "truth.csv", truth);
  std::vector<RegionSpec> windows;
  for (const auto& w : s.truth.windows) windows.push_back({w.name, "t", w.start, w.end});
  json values = json::object();
  for (const auto& [k, v] : s.truth.values) values[k] = v;
  write_json(out / "truth.json", {{"generator", gen},
                                  {"seed", cfg.seed},
                                  {"values", values},
                                  {"regions", regions_to_json(windows)},
                                  {"held_out", s.data.held_out}});
  std::cout << "synth: " << s.data.size() << " rows written to " << (out / "data.csv").string() << "\n";
}

void cmd_sample(const Common& c) {
  const RunConfig cfg = load_config(c, true);
  const json& j = cfg.sample;
  if (!j.is_object()) throw ConfigError("config has no 'sample' section");
  check_keys(j, {"kernel", "groups", "params", "column", "lo", "hi", "n", "draws"}, "sample");
  std::string kernel = cfg.kernel, column = "x";
  double lo = 0.0, hi = 10.0;
  int n = 200, draws = 5;
  ColumnGroups groups = cfg.groups;
  read(j, "kernel", kernel);
  read(j, "groups", groups);
  read(j, "column", column);
  read(j, "lo", lo);
  read(j, "hi", hi);
  read(j, "n", n);
  read(j, "draws", draws);
  if (n < 2 || draws < 1 || !(hi > lo)) throw ConfigError("sample needs n >= 2, draws >= 1 and hi > lo");
  Inputs x;
  x.columns = {column};
  x.values = Eigen::VectorXd::LinSpaced(n, lo, hi);
  ParamVector params;
  const KernelExpr e = build_kernel(parse_kernel_spec(kernel), params, &x, groups);
  apply_overrides(params, cfg.params);
  if (j.contains("params")) apply_overrides(params, parse_overrides(j["params"]));
  const Eigen::MatrixXd f = sample_prior(e, params, x, draws, cfg.seed);

  Table t{{column}, Eigen::MatrixXd(n, draws + 1)};
  t.values.col(0) = x.values.col(0);
  t.values.rightCols(draws) = f;
  for (int d = 0; d < draws; ++d) t.columns.push_back("draw_" + std::to_string(d));
  prepare_out(c.out);
  write_csv(fs::path(c.out) / "samples.csv", t);
  write_json(fs::path(c.out) / "sample_params.json", params_json(params));
  std::cout << "sample: " << draws << " draws written to " << (fs::path(c.out) / "samples.csv").string() << "\n";
}

bool cmd_gradcheck(const Common& c, const std::optional<fs::path>& data_path, double step, double threshold) {
  const RunConfig cfg = load_config(c, true);
  const Dataset all = load_data(cfg, data_path);
  const Split split = split_dataset(all, cfg);
  Setup s = make_setup(cfg, split.train);

  FdReport r;
  ParamVector at;
  Objective objective;
  NoiseModel noise;
  if (cfg.heteroscedastic) {
    // Bound at the prior-centred variational state.
    ParamVector signal = s.params;
    const std::size_t ni = signal.index(kNoiseParam);
    signal.reset(ni, signal[ni].value, signal[ni].value, signal[ni].value);
    noise = make_noise_model(s.kernel, s.train.x);
    const Eigen::Index n = s.train.size();
    for (std::size_t i : signal.free_indices()) at.add(signal[i]);
    for (std::size_t i : noise.params.free_indices()) at.add(noise.params[i]);
    for (Eigen::Index i = 0; i < n; ++i) at.add({"q.nu[" + std::to_string(i) + "]", 0.0, -1e8, 1e8, Transform::identity});
    for (Eigen::Index i = 0; i < n; ++i)
      at.add({"q.lambda[" + std::to_string(i) + "]", cfg.vhgp.lambda0, 1e-8, 1e8, Transform::log});
    const auto ns = static_cast<Eigen::Index>(signal.free_count());
    const auto nn = static_cast<Eigen::Index>(noise.params.free_count());
    objective = [&, signal, ns, nn, n](const Eigen::VectorXd& t, Eigen::VectorXd* grad) mutable {
      NoiseModel nw = noise;
      signal.set_free_transformed(t.segment(0, ns));
      nw.params.set_free_transformed(t.segment(ns, nn));
      const Eigen::VectorXd lambda = t.segment(ns + nn + n, n).array().exp();
      const BoundGradient g = mv_bound_with_grad(s.kernel, signal, nw, t.segment(ns + nn, n), lambda, s.train);
      if (grad) {
        grad->resize(t.size());
        *grad << -g.signal, -g.noise, -g.nu, -g.log_lambda;
      }
      return -g.value;
    };
  } else {
    for (std::size_t i : s.params.free_indices()) at.add(s.params[i]);
    objective = nlml_objective(s.kernel, s.params, s.train);
  }
  r = fd_check(objective, at, step);

  json entries = json::array();
  std::cout << std::left << std::setw(36) << "parameter" << std::right << std::setw(16) << "analytic"
            << std::setw(16) << "numeric" << std::setw(12) << "rel_err" << "\n";
  for (const auto& e : r.entries) {
    std::cout << std::left << std::setw(36) << e.name << std::right << std::setprecision(6) << std::setw(16)
              << e.analytic << std::setw(16) << e.numeric << std::setw(12) << std::setprecision(2) << e.relative_error
              << "\n";
    entries.push_back(
        {{"name", e.name}, {"analytic", e.analytic}, {"numeric", e.numeric}, {"relative_error", e.relative_error}});
  }
  const bool ok = r.max_relative_error <= threshold;
  prepare_out(c.out);
  write_json(fs::path(c.out) / "gradcheck.json", {{"step", step},
                                                  {"threshold", threshold},
                                                  {"max_relative_error", r.max_relative_error},
                                                  {"worst", r.entries.empty() ? "" : r.entries[r.worst].name},
                                                  {"passed", ok},
                                                  {"entries", entries}});
  std::cout << "gradcheck: worst relative error " << std::setprecision(3) << r.max_relative_error
            << (ok ? " (ok)" : " exceeds threshold") << "\n";
  return ok;
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig RunConfig::parse(const json& j, const fs::path& base_dir) {
  check_keys(j, {"data", "inputs", "target", "kernel", "groups", "params", "noise", "standardize_inputs", "optimizer",
                 "vhgp", "fit_subset", "fit_block", "train_frac", "decimate", "seed", "regions", "synth", "sample"},
             "config");
  RunConfig c;
  c.base_dir = base_dir;
  std::string data;
  read(j, "data", data);
  c.data = data;
  read(j, "inputs", c.inputs);
  read(j, "target", c.target);
  read(j, "kernel", c.kernel);
  read(j, "groups", c.groups);
  if (j.contains("params")) c.params = parse_overrides(j["params"]);
  if (j.contains("noise")) {
    const json& n = j["noise"];
    check_keys(n, {"model", "variance", "lower", "upper"}, "noise");
    std::string model = "homoscedastic";
    read(n, "model", model);
    if (model != "homoscedastic" && model != "heteroscedastic")
      throw ConfigError("noise.model must be 'homoscedastic' or 'heteroscedastic'");
    c.heteroscedastic = model == "heteroscedastic";
    read(n, "variance", c.noise_init);
    read(n, "lower", c.noise_lower);
    read(n, "upper", c.noise_upper);
  }
  read(j, "standardize_inputs", c.standardize_inputs);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j["optimizer"], c.optimizer, "optimizer");
  c.vhgp.prefit = c.optimizer;
  if (j.contains("vhgp")) {
    const json& v = j["vhgp"];
    check_keys(v, {"optimizer", "lambda0", "residual_floor"}, "vhgp");
    if (v.contains("optimizer")) c.vhgp.optimizer = parse_optimizer(v["optimizer"], c.vhgp.optimizer, "vhgp.optimizer");
    read(v, "lambda0", c.vhgp.lambda0);
    read(v, "residual_floor", c.vhgp.residual_floor);
  }
  read(j, "fit_subset", c.fit_subset);
  read(j, "fit_block", c.fit_block);
  read(j, "train_frac", c.train_frac);
  if (!(c.train_frac > 0.0 && c.train_frac <= 1.0)) throw ConfigError("train_frac must lie in (0, 1]");
  read(j, "decimate", c.decimate);
  read(j, "seed", c.seed);
  c.optimizer.seed = c.seed;
  c.vhgp.prefit.seed = c.seed;
  c.vhgp.optimizer.seed = c.seed;
  if (j.contains("regions")) c.regions = parse_regions(j["regions"]);
  if (j.contains("synth")) c.synth = j["synth"];
  if (j.contains("sample")) c.sample = j["sample"];
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  return parse(read_json(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

fs::path RunConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

void apply_overrides(ParamVector& params, const std::map<std::string, ParamOverride>& overrides) {
  for (const auto& [name, o] : overrides) {
    const auto i = params.find(name);
    if (!i) throw ConfigError("params: unknown parameter '" + name + "'");
    const Param& p = params[*i];
    const double value = o.value.value_or(p.value);
    if (o.fixed) {
      params.reset(*i, value, value, value);
    } else {
      const double lo = o.lower.value_or(p.lower), hi = o.upper.value_or(p.upper);
      params.reset(*i, o.value ? value : std::clamp(value, lo, hi), lo, hi);
    }
  }
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const DataError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kExitNumerical;
  if (dynamic_cast<const OptimizationError*>(&e)) return kExitOptimization;
  return kExitConfig;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"cpk: change-point Gaussian process regression"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run configuration");
    sub->add_option("--out", common.out, "output directory")->capture_default_str();
    sub->add_option("--seed", common.seed, "random seed (overrides the config)");
  };

  std::string data, model, predictions, train, regions;
  double step = 1e-5, threshold = 1e-3;
  bool curves = false;

  auto* fit = app.add_subcommand("fit", "train a model");
  add_common(fit);
  fit->add_option("--data", data, "training CSV (overrides the config)");
  fit->add_option("--train-frac", common.train_frac, "random training fraction");
  fit->add_option("--decimate", common.decimate, "train on every k-th row, test on the rest");

  auto* pred = app.add_subcommand("predict", "predict at new inputs");
  add_common(pred);
  pred->add_option("--model", model, "model file")->required();
  pred->add_option("--data", data, "CSV with the model's input columns")->required();

  auto* eval = app.add_subcommand("evaluate", "score predictions");
  add_common(eval);
  eval->add_option("--predictions", predictions, "CSV from predict, with the target column")->required();
  eval->add_option("--train", train, "training CSV for the trivial-predictor statistics");
  eval->add_option("--model", model, "model file (training statistics, switch curves)");
  eval->add_option("--regions", regions, "JSON file with a 'regions' array");
  eval->add_flag("--switch-curves", curves, "write sigma curves for every switch");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--decimate", common.decimate, "training decimation (oscillator)");

  auto* sample = app.add_subcommand("sample", "draw from a kernel prior");
  add_common(sample);

  auto* grad = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(grad);
  grad->add_option("--data", data, "CSV (overrides the config)");
  grad->add_option("--train-frac", common.train_frac, "random training fraction");
  grad->add_option("--decimate", common.decimate, "train on every k-th row");
  grad->add_option("--step", step, "relative finite-difference step")->capture_default_str();
  grad->add_option("--threshold", threshold, "largest acceptable relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::optional<fs::path> data_opt = data.empty() ? std::nullopt : std::optional<fs::path>(data);
  try {
    if (*fit) cmd_fit(common, data_opt);
    if (*pred) cmd_predict(common, model, data);
    if (*eval) cmd_evaluate(common, predictions, train, model, regions, curves);
    if (*synth) cmd_synth(common);
    if (*sample) cmd_sample(common);
    if (*grad && !cmd_gradcheck(common, data_opt, step, threshold)) return kExitNumerical;
    return kExitOk;
  } catch (const std::exception& e) {
    const int code = exit_code(e);
    const char* kind = code == kExitData ? "data error"
                       : code == kExitNumerical ? "numerical error"
                       : code == kExitOptimization ? "optimization error"
                                                   : "config error";
    std::cerr << kind << ": " << e.what() << "\n";
    return code;
  }
}

}  // namespace cpk::cli
