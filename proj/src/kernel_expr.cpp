#include "cpk/kernel_expr.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "cpk/error.hpp"

namespace cpk {

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::sum: return "sum";
    case NodeKind::product: return "product";
    case NodeKind::se: return "se";
    case NodeKind::poly2: return "poly2";
    case NodeKind::sdof: return "sdof";
    case NodeKind::sigmoid: return "sw";
    case NodeKind::sigmoid_neg: return "swneg";
  }
  return "?";
}

std::string_view to_string(Feature f) {
  switch (f) {
    case Feature::identity: return "identity";
    case Feature::cos2: return "cos2";
    case Feature::negate: return "neg";
  }
  return "?";
}

std::string ColumnBinding::label() const {
  if (feature == Feature::identity) return column;
  return std::string(to_string(feature)) + "(" + column + ")";
}

double ColumnBinding::apply(double raw) const {
  double v = raw;
  switch (feature) {
    case Feature::identity: break;
    case Feature::cos2: v = std::cos(2.0 * raw); break;
    case Feature::negate: v = -raw; break;
  }
  return (v - shift) / scale;
}

KernelExpr KernelExpr::sum(std::vector<KernelExpr> children) {
  KernelExpr e;
  e.kind = NodeKind::sum;
  e.children = std::move(children);
  return e;
}

KernelExpr KernelExpr::product(std::vector<KernelExpr> children) {
  KernelExpr e;
  e.kind = NodeKind::product;
  e.children = std::move(children);
  return e;
}

namespace {

std::size_t expected_slots(const KernelExpr& e) {
  switch (e.kind) {
    case NodeKind::se: return 1 + e.inputs.size();
    case NodeKind::poly2: return 2;
    case NodeKind::sdof: return 4;
    case NodeKind::sigmoid:
    case NodeKind::sigmoid_neg: return 2;
    default: return 0;
  }
}

void validate_node(const KernelExpr& e, const ParamVector& params,
                   std::map<std::string, const KernelExpr*>& switch_seen, int depth) {
  if (depth > 256) throw ConfigError("kernel expression nested too deeply");
  if (!e.is_leaf()) {
    if (e.children.size() < 2)
      throw ConfigError(std::string(to_string(e.kind)) + " node needs at least two children");
    if (!e.inputs.empty() || !e.slots.empty())
      throw ConfigError("composite kernel node carries leaf data");
    for (const auto& c : e.children) validate_node(c, params, switch_seen, depth + 1);
    return;
  }
  if (!e.children.empty()) throw ConfigError("kernel leaf has children");
  if (e.inputs.empty()) throw ConfigError(std::string(to_string(e.kind)) + " leaf has no input column");
  if ((e.kind == NodeKind::sdof || e.kind == NodeKind::sigmoid || e.kind == NodeKind::sigmoid_neg) &&
      e.inputs.size() != 1)
    throw ConfigError(std::string(to_string(e.kind)) + " leaf takes exactly one input column");
  if (e.slots.size() != expected_slots(e))
    throw ConfigError(std::string(to_string(e.kind)) + " leaf has wrong number of parameter slots");
  for (auto s : e.slots)
    if (s >= params.size()) throw ConfigError("kernel parameter slot out of range");
  for (const auto& b : e.inputs)
    if (!(b.scale > 0.0) || !std::isfinite(b.shift)) throw ConfigError("invalid input standardisation");
  if (e.kind == NodeKind::sigmoid || e.kind == NodeKind::sigmoid_neg) {
    if (e.tag.empty()) throw ConfigError("switch leaf without a tag");
    auto [it, inserted] = switch_seen.emplace(e.tag, &e);
    if (!inserted) {
      const KernelExpr& other = *it->second;
      if (other.slots != e.slots)
        throw ConfigError("switch '" + e.tag + "' leaves do not share parameters");
      if (other.inputs[0].label() != e.inputs[0].label())
        throw ConfigError("switch '" + e.tag + "' is bound to both " + other.inputs[0].label() +
                          " and " + e.inputs[0].label());
    }
  }
}

void collect_slots(const KernelExpr& e, std::vector<std::size_t>& out) {
  for (auto s : e.slots) out.push_back(s);
  for (const auto& c : e.children) collect_slots(c, out);
}

void collect_switches(const KernelExpr& e, std::vector<SwitchInfo>& out) {
  if (e.kind == NodeKind::sigmoid || e.kind == NodeKind::sigmoid_neg) {
    const bool known = std::any_of(out.begin(), out.end(), [&](const SwitchInfo& s) { return s.tag == e.tag; });
    if (!known) out.push_back({e.tag, e.inputs[0], e.slots[0], e.slots[1]});
  }
  for (const auto& c : e.children) collect_switches(c, out);
}

}  // namespace

void validate(const KernelExpr& expr, const ParamVector& params) {
  std::map<std::string, const KernelExpr*> switch_seen;
  validate_node(expr, params, switch_seen, 0);
}

void check_columns(const KernelExpr& expr, const Inputs& x) {
  for (const auto& b : expr.inputs)
    if (!x.find(b.column)) throw ConfigError("kernel references unknown column '" + b.column + "'");
  for (const auto& c : expr.children) check_columns(c, x);
}

std::vector<std::size_t> referenced_slots(const KernelExpr& expr) {
  std::vector<std::size_t> out;
  collect_slots(expr, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void standardize_se_inputs(KernelExpr& expr, const Inputs& x) {
  if (expr.kind == NodeKind::se) {
    for (auto& b : expr.inputs) {
      const auto col = static_cast<Eigen::Index>(x.index(b.column));
      ColumnBinding raw = b;
      raw.shift = 0.0;
      raw.scale = 1.0;
      const Eigen::Index n = x.rows();
      double mean = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) mean += raw.apply(x.values(i, col));
      mean /= static_cast<double>(std::max<Eigen::Index>(n, 1));
      double var = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = raw.apply(x.values(i, col)) - mean;
        var += d * d;
      }
      var /= static_cast<double>(std::max<Eigen::Index>(n, 1));
      const double sd = std::sqrt(var);
      b.shift = mean;
      b.scale = sd > 1e-12 ? sd : 1.0;
    }
  }
  for (auto& c : expr.children) standardize_se_inputs(c, x);
}

std::vector<SwitchInfo> switches(const KernelExpr& expr) {
  std::vector<SwitchInfo> out;
  collect_switches(expr, out);
  return out;
}

KernelBuilder::KernelBuilder(ParamVector& params, const Inputs* data) : params_(params), data_(data) {}

std::vector<double> KernelBuilder::feature_values(const ColumnBinding& b) const {
  std::vector<double> out;
  if (data_ == nullptr) return out;
  const auto col = data_->find(b.column);
  if (!col) throw ConfigError("kernel references unknown column '" + b.column + "'");
  out.reserve(static_cast<std::size_t>(data_->rows()));
  for (Eigen::Index i = 0; i < data_->rows(); ++i)
    out.push_back(b.apply(data_->values(i, static_cast<Eigen::Index>(*col))));
  return out;
}

KernelExpr KernelBuilder::se(std::vector<ColumnBinding> inputs) {
  KernelExpr e;
  e.kind = NodeKind::se;
  const std::string prefix = "se" + std::to_string(n_se_++);
  e.slots.push_back(params_.add({prefix + ".variance", 1.0, 1e-6, 1e3, Transform::log}));
  for (const auto& b : inputs)
    e.slots.push_back(params_.add({prefix + ".lengthscale[" + b.label() + "]", 1.0, 1e-3, 1e3, Transform::log}));
  e.inputs = std::move(inputs);
  return e;
}

KernelExpr KernelBuilder::poly2(std::vector<ColumnBinding> inputs) {
  KernelExpr e;
  e.kind = NodeKind::poly2;
  const std::string prefix = "poly2_" + std::to_string(n_poly2_++);
  // Scale so that the initial prior variance at a typical point is O(1).
  double mean_sq = 1.0;
  if (data_ != nullptr && data_->rows() > 0) {
    mean_sq = 0.0;
    for (const auto& b : inputs)
      for (double v : feature_values(b)) mean_sq += v * v;
    mean_sq /= static_cast<double>(data_->rows());
    if (!(mean_sq > 1e-12)) mean_sq = 1.0;
  }
  const double c0 = mean_sq;
  const double v0 = 1.0 / ((mean_sq + c0) * (mean_sq + c0));
  e.slots.push_back(params_.add({prefix + ".variance", v0, v0 * 1e-8, v0 * 1e4, Transform::log}));
  e.slots.push_back(params_.add({prefix + ".c", c0, 0.0, 100.0 * c0, Transform::identity}));
  e.inputs = std::move(inputs);
  return e;
}

KernelExpr KernelBuilder::sdof(ColumnBinding input) {
  KernelExpr e;
  e.kind = NodeKind::sdof;
  const std::string prefix = "sdof" + std::to_string(n_sdof_++);
  const double zeta = 0.05;
  const double omega = 2.0 * std::numbers::pi;
  // Unit prior variance at tau = 0: sigma^2 / (4 m^2 zeta omega^3) = 1.
  const double var0 = 4.0 * zeta * omega * omega * omega;
  e.slots.push_back(params_.add({prefix + ".variance", var0, 1e-12, 1e15, Transform::log}));
  e.slots.push_back(params_.add({prefix + ".mass", 1.0, 1.0, 1.0, Transform::log}));
  e.slots.push_back(params_.add({prefix + ".damping", zeta, 1e-3, 0.95, Transform::log}));
  e.slots.push_back(params_.add({prefix + ".omega_n", omega, 1e-3, 1e5, Transform::log}));
  e.inputs.push_back(std::move(input));
  return e;
}

KernelExpr KernelBuilder::switch_leaf(NodeKind kind, ColumnBinding input, const std::string& tag) {
  KernelExpr e;
  e.kind = kind;
  e.tag = tag;
  const std::string a_name = "switch." + tag + ".a";
  const std::string x0_name = "switch." + tag + ".x0";
  if (auto a = params_.find(a_name)) {
    e.slots = {*a, params_.index(x0_name)};
  } else {
    double lo = -1e3, hi = 1e3, mid = 0.0;
    auto z = feature_values(input);
    if (!z.empty()) {
      std::sort(z.begin(), z.end());
      lo = z.front();
      hi = z.back();
      mid = z[z.size() / 2];
    }
    const double a0 = hi > lo ? std::clamp(8.0 / (hi - lo), 0.01, 100.0) : 1.0;
    e.slots.push_back(params_.add({a_name, a0, 0.01, 100.0, Transform::log}));
    e.slots.push_back(params_.add({x0_name, mid, lo, hi, Transform::identity}));
  }
  e.inputs.push_back(std::move(input));
  return e;
}

KernelExpr KernelBuilder::sigmoid(ColumnBinding input, const std::string& tag) {
  return switch_leaf(NodeKind::sigmoid, std::move(input), tag);
}

KernelExpr KernelBuilder::sigmoid_neg(ColumnBinding input, const std::string& tag) {
  return switch_leaf(NodeKind::sigmoid_neg, std::move(input), tag);
}

}  // namespace cpk
