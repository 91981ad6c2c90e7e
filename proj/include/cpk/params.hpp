#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cpk {

enum class Transform { identity, log };

std::string_view to_string(Transform t);
Transform transform_from_string(std::string_view s);

// One named, bounded hyperparameter. A parameter whose bounds coincide is
// held fixed and is not exposed to the optimizer.
struct Param {
  std::string name;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  Transform transform = Transform::identity;

  bool fixed() const { return lower == upper; }
  double to_transformed(double v) const;
  double from_transformed(double t) const;
  // d value / d transformed, evaluated at the current value.
  double jacobian() const { return transform == Transform::log ? value : 1.0; }
};

// Flat ordered hyperparameter vector.
//
// Invariants (checked on every mutation): lower <= value <= upper, log
// entries have lower > 0, names are unique.
class ParamVector {
 public:
  ParamVector() = default;

  std::size_t add(Param p);

  std::size_t size() const { return entries_.size(); }
  const Param& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Param>& entries() const { return entries_; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index(std::string_view name) const;  // throws ConfigError
  double value(std::string_view name) const { return entries_[index(name)].value; }

  void set_value(std::size_t i, double v);
  void set_bounds(std::size_t i, double lower, double upper);
  // Replace value and bounds together, validating the result once.
  void reset(std::size_t i, double value, double lower, double upper);

  // Free (non-fixed) entries, in order.
  std::vector<std::size_t> free_indices() const;
  std::size_t free_count() const;

  Eigen::VectorXd free_transformed() const;
  Eigen::VectorXd free_lower_transformed() const;
  Eigen::VectorXd free_upper_transformed() const;
  // Writes back free parameters from the transformed space, projecting onto
  // the bounds first.
  void set_free_transformed(const Eigen::Ref<const Eigen::VectorXd>& t);

  std::vector<std::string> free_names() const;

 private:
  static void validate(const Param& p);
  std::vector<Param> entries_;
};

}  // namespace cpk
