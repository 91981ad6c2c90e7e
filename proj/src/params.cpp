#include "cpk/params.hpp"

#include <algorithm>
#include <cmath>

#include "cpk/error.hpp"

namespace cpk {

std::string_view to_string(Transform t) { return t == Transform::log ? "log" : "identity"; }

Transform transform_from_string(std::string_view s) {
  if (s == "log") return Transform::log;
  if (s == "identity") return Transform::identity;
  throw ConfigError("unknown parameter transform '" + std::string(s) + "'");
}

double Param::to_transformed(double v) const {
  return transform == Transform::log ? std::log(v) : v;
}

double Param::from_transformed(double t) const {
  return transform == Transform::log ? std::exp(t) : t;
}

void ParamVector::validate(const Param& p) {
  if (p.name.empty()) throw ConfigError("parameter with empty name");
  if (!std::isfinite(p.value) || !std::isfinite(p.lower) || !std::isfinite(p.upper))
    throw ConfigError("parameter '" + p.name + "' has a non-finite value or bound");
  if (p.lower > p.upper)
    throw ConfigError("parameter '" + p.name + "' has lower bound above upper bound");
  if (p.value < p.lower || p.value > p.upper)
    throw ConfigError("parameter '" + p.name + "' value " + std::to_string(p.value) +
                      " outside [" + std::to_string(p.lower) + ", " +
                      std::to_string(p.upper) + "]");
  if (p.transform == Transform::log && p.lower <= 0.0 && !p.fixed())
    throw ConfigError("log-transformed parameter '" + p.name + "' needs a positive lower bound");
}

std::size_t ParamVector::add(Param p) {
  validate(p);
  if (find(p.name)) throw ConfigError("duplicate parameter name '" + p.name + "'");
  entries_.push_back(std::move(p));
  return entries_.size() - 1;
}

std::optional<std::size_t> ParamVector::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  return std::nullopt;
}

std::size_t ParamVector::index(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

void ParamVector::set_value(std::size_t i, double v) {
  Param p = entries_.at(i);
  p.value = v;
  validate(p);
  entries_[i] = std::move(p);
}

void ParamVector::set_bounds(std::size_t i, double lower, double upper) {
  Param p = entries_.at(i);
  p.lower = lower;
  p.upper = upper;
  validate(p);
  entries_[i] = std::move(p);
}

void ParamVector::reset(std::size_t i, double value, double lower, double upper) {
  Param p = entries_.at(i);
  p.value = value;
  p.lower = lower;
  p.upper = upper;
  validate(p);
  entries_[i] = std::move(p);
}

std::vector<std::size_t> ParamVector::free_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (!entries_[i].fixed()) out.push_back(i);
  return out;
}

std::size_t ParamVector::free_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const Param& p) { return !p.fixed(); }));
}

Eigen::VectorXd ParamVector::free_transformed() const {
  const auto idx = free_indices();
  Eigen::VectorXd t(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    t[static_cast<Eigen::Index>(k)] = entries_[idx[k]].to_transformed(entries_[idx[k]].value);
  return t;
}

Eigen::VectorXd ParamVector::free_lower_transformed() const {
  const auto idx = free_indices();
  Eigen::VectorXd t(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    t[static_cast<Eigen::Index>(k)] = entries_[idx[k]].to_transformed(entries_[idx[k]].lower);
  return t;
}

Eigen::VectorXd ParamVector::free_upper_transformed() const {
  const auto idx = free_indices();
  Eigen::VectorXd t(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    t[static_cast<Eigen::Index>(k)] = entries_[idx[k]].to_transformed(entries_[idx[k]].upper);
  return t;
}

void ParamVector::set_free_transformed(const Eigen::Ref<const Eigen::VectorXd>& t) {
  const auto idx = free_indices();
  if (static_cast<std::size_t>(t.size()) != idx.size())
    throw InvalidArgument("free parameter vector has wrong length");
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Param& p = entries_[idx[k]];
    const double v = p.from_transformed(t[static_cast<Eigen::Index>(k)]);
    if (!std::isfinite(v)) throw InvalidArgument("non-finite value for parameter '" + p.name + "'");
    // exp(log(x)) can land one ulp outside the bound.
    p.value = std::clamp(v, p.lower, p.upper);
  }
}

std::vector<std::string> ParamVector::free_names() const {
  std::vector<std::string> out;
  for (auto i : free_indices()) out.push_back(entries_[i].name);
  return out;
}

}  // namespace cpk
