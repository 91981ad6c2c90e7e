#include "cpk/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cpk/error.hpp"

namespace cpk {

using json = nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_cell(std::string_view cell, std::size_t line, const std::string& column) {
  auto fail = [&](const std::string& why) {
    throw DataError("line " + std::to_string(line) + ", column '" + column + "': " + why);
  };
  if (cell.empty()) fail("empty cell");
  std::string_view body = cell;
  if (body.front() == '+') body.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
  if (ec == std::errc::result_out_of_range) fail("value out of range '" + std::string(cell) + "'");
  if (ec != std::errc() || end != body.data() + body.size()) fail("not a number '" + std::string(cell) + "'");
  if (!std::isfinite(v)) fail("non-finite value '" + std::string(cell) + "'");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  return f;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read '" + path.string() + "'");
  return f;
}

}  // namespace

std::size_t Table::index(std::string_view column) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == column) return i;
  throw ConfigError("unknown column '" + std::string(column) + "'");
}

Eigen::VectorXd Table::column(std::string_view name) const { return values.col(static_cast<Eigen::Index>(index(name))); }

Table parse_csv(std::istream& in) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw DataError("empty CSV: no header row");
  for (auto h : split(line)) {
    if (h.empty()) throw DataError("line " + std::to_string(lineno) + ": empty column name");
    t.columns.emplace_back(h);
  }
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (t.columns[i] == t.columns[j]) throw DataError("duplicate column name '" + t.columns[i] + "'");

  std::vector<double> cells;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto parts = split(line);
    if (parts.size() != t.columns.size())
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                      " fields, found " + std::to_string(parts.size()));
    for (std::size_t j = 0; j < parts.size(); ++j) cells.push_back(parse_cell(parts[j], lineno, t.columns[j]));
    ++rows;
  }
  const auto cols = static_cast<Eigen::Index>(t.columns.size());
  t.values.resize(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      t.values(static_cast<Eigen::Index>(r), c) = cells[r * t.columns.size() + static_cast<std::size_t>(c)];
  return t;
}

Table read_csv(const std::filesystem::path& path) {
  auto f = open_in(path);
  try {
    return parse_csv(f);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvalidArgument("cannot format value");
  return std::string(buf, end);
}

void write_csv(std::ostream& out, const Table& table) {
  if (static_cast<Eigen::Index>(table.columns.size()) != table.values.cols())
    throw InvalidArgument("table header does not match its width");
  for (std::size_t j = 0; j < table.columns.size(); ++j) out << (j ? "," : "") << table.columns[j];
  out << '\n';
  std::string row;
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      if (j) row.push_back(',');
      row += format_double(table.values(i, j));
    }
    row.push_back('\n');
    out << row;
  }
}

void write_csv(const std::filesystem::path& path, const Table& table) {
  auto f = open_out(path);
  write_csv(f, table);
  if (!f) throw ConfigError("write failed for '" + path.string() + "'");
}

Dataset to_dataset(const Table& table, const std::vector<std::string>& inputs, const std::string& target) {
  Dataset d;
  d.x.columns = inputs;
  d.x.values.resize(table.values.rows(), static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t j = 0; j < inputs.size(); ++j)
    d.x.values.col(static_cast<Eigen::Index>(j)) = table.column(inputs[j]);
  d.y = table.column(target);
  d.validate();
  return d;
}

Table to_table(const Inputs& x) { return {x.columns, x.values}; }

// ---------------------------------------------------------------------------
// Model container

const KernelExpr& Model::kernel() const { return gp ? gp->kernel : hgp->kernel; }
const ParamVector& Model::params() const { return gp ? gp->params : hgp->params; }
const Dataset& Model::train() const { return gp ? gp->train : hgp->train; }

Posterior Model::predict(const Inputs& x) const {
  Posterior p = gp ? cpk::predict(*gp, x) : predict_vhgp(*hgp, x);
  p.mean = scaler.invert_mean(p.mean);
  p.var_latent = scaler.invert_variance(p.var_latent);
  p.var_noisy = scaler.invert_variance(p.var_noisy);
  return p;
}

namespace {

json params_to_json(const ParamVector& p) {
  json out = json::array();
  for (const auto& e : p.entries())
    out.push_back({{"name", e.name},
                   {"value", e.value},
                   {"lower", e.lower},
                   {"upper", e.upper},
                   {"transform", std::string(to_string(e.transform))}});
  return out;
}

// Overwrites entries of `p` by name. Every stored entry must exist.
void params_from_json(const json& j, ParamVector& p) {
  if (j.size() != p.size()) throw ConfigError("model file: parameter count does not match the kernel");
  for (const auto& e : j) {
    const std::size_t i = p.index(e.at("name").get<std::string>());
    if (transform_from_string(e.at("transform").get<std::string>()) != p[i].transform)
      throw ConfigError("model file: transform mismatch for '" + p[i].name + "'");
    p.reset(i, e.at("value").get<double>(), e.at("lower").get<double>(), e.at("upper").get<double>());
  }
}

void collect_bindings(KernelExpr& e, std::vector<ColumnBinding*>& out) {
  for (auto& b : e.inputs) out.push_back(&b);
  for (auto& c : e.children) collect_bindings(c, out);
}

json bindings_to_json(const KernelExpr& e) {
  std::vector<ColumnBinding*> all;
  collect_bindings(const_cast<KernelExpr&>(e), all);
  json out = json::array();
  for (const auto* b : all) out.push_back({b->shift, b->scale});
  return out;
}

void bindings_from_json(const json& j, KernelExpr& e) {
  std::vector<ColumnBinding*> all;
  collect_bindings(e, all);
  if (j.size() != all.size()) throw ConfigError("model file: binding count does not match the kernel");
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i]->shift = j[i].at(0).get<double>();
    all[i]->scale = j[i].at(1).get<double>();
  }
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_to_json(m.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Eigen::VectorXd r = vector_from_json(j[static_cast<std::size_t>(i)]);
    if (r.size() != cols) throw ConfigError("model file: ragged training inputs");
    m.row(i) = r.transpose();
  }
  return m;
}

}  // namespace

std::string save_model(const Model& m) {
  if (m.gp.has_value() == m.hgp.has_value()) throw InvalidArgument("model must hold exactly one state");
  json j;
  j["format"] = "cpk-model";
  j["format_version"] = kModelFormatVersion;
  j["library_version"] = CPK_VERSION;
  j["noise_model"] = m.heteroscedastic() ? "heteroscedastic" : "homoscedastic";
  j["kernel"] = m.kernel_text;
  j["groups"] = m.groups;
  j["inputs"] = m.inputs;
  j["target"] = m.target;
  j["scaler"] = {{"mean", m.scaler.mean}, {"scale", m.scaler.scale}};
  j["bindings"] = bindings_to_json(m.kernel());
  j["params"] = params_to_json(m.params());
  const Dataset& train = m.train();
  j["train"] = {{"columns", train.x.columns}, {"x", matrix_to_json(train.x.values)}, {"y", vector_to_json(train.y)}};
  if (m.hgp) {
    const HGPState& h = *m.hgp;
    j["noise_gp"] = {{"params", params_to_json(h.noise.params)},
                     {"bindings", bindings_to_json(h.noise.kernel)},
                     {"nu", vector_to_json(h.q.nu)},
                     {"lambda", vector_to_json(h.q.lambda)}};
  }
  return j.dump(1) + "\n";
}

void save_model(const std::filesystem::path& path, const Model& model) {
  auto f = open_out(path);
  f << save_model(model);
  if (!f) throw ConfigError("write failed for '" + path.string() + "'");
}

Model load_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "cpk-model") throw ConfigError("not a model file");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw ConfigError("model format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    Model m;
    m.kernel_text = j.at("kernel").get<std::string>();
    m.groups = j.at("groups").get<ColumnGroups>();
    m.inputs = j.at("inputs").get<std::vector<std::string>>();
    m.target = j.at("target").get<std::string>();
    m.scaler.mean = j.at("scaler").at("mean").get<double>();
    m.scaler.scale = j.at("scaler").at("scale").get<double>();

    Dataset train;
    train.x.columns = j.at("train").at("columns").get<std::vector<std::string>>();
    train.x.values = matrix_from_json(j.at("train").at("x"), static_cast<Eigen::Index>(train.x.columns.size()));
    train.y = vector_from_json(j.at("train").at("y"));
    train.validate();

    ParamVector params;
    KernelExpr kernel = build_kernel(parse_kernel_spec(m.kernel_text), params, &train.x, m.groups);
    if (!params.find(kNoiseParam)) add_noise_param(params, 1.0, 1.0, 1.0);
    params_from_json(j.at("params"), params);
    bindings_from_json(j.at("bindings"), kernel);

    const std::string noise = j.at("noise_model").get<std::string>();
    if (noise == "homoscedastic") {
      m.gp = make_state(std::move(kernel), std::move(params), std::move(train));
    } else if (noise == "heteroscedastic") {
      const json& g = j.at("noise_gp");
      NoiseModel nm = make_noise_model(kernel, train.x);
      params_from_json(g.at("params"), nm.params);
      bindings_from_json(g.at("bindings"), nm.kernel);
      nm.inputs = nm.kernel.inputs;
      VariationalState q;
      q.nu = vector_from_json(g.at("nu"));
      q.lambda = vector_from_json(g.at("lambda"));
      if (q.nu.size() != train.y.size() || q.lambda.size() != train.y.size())
        throw ConfigError("model file: variational state does not match the training set");
      m.hgp = make_hgp_state(std::move(kernel), std::move(params), std::move(nm), std::move(q), std::move(train));
    } else {
      throw ConfigError("model file: unknown noise model '" + noise + "'");
    }
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model file is malformed: ") + e.what());
  }
}

Model load_model(const std::filesystem::path& path) {
  auto f = open_in(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return load_model(ss.str());
}

}  // namespace cpk
