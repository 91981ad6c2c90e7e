#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "cpk/dataset.hpp"
#include "cpk/params.hpp"

namespace cpk {

enum class NodeKind { sum, product, se, poly2, sdof, sigmoid, sigmoid_neg };

// Per-column feature map applied before a leaf sees the value.
enum class Feature {
  identity,
  cos2,    // x -> cos(2x), x in radians
  negate,  // x -> -x
};

std::string_view to_string(NodeKind k);
std::string_view to_string(Feature f);

struct ColumnBinding {
  std::string column;
  Feature feature = Feature::identity;
  // Affine standardisation applied after the feature map: (v - shift) / scale.
  double shift = 0.0;
  double scale = 1.0;

  // Human-readable label, e.g. "cos2(theta)".
  std::string label() const;
  double apply(double raw) const;
};

// Covariance expression tree.
//
// Leaf parameter slots index into a ParamVector:
//   se          [variance, lengthscale_1 .. lengthscale_D]
//   poly2       [variance, c]
//   sdof        [variance, mass, damping, omega_n]
//   sigmoid(_neg) [a, x0]      shared by every switch leaf with the same tag
struct KernelExpr {
  NodeKind kind = NodeKind::se;
  std::vector<KernelExpr> children;    // sum / product only
  std::vector<ColumnBinding> inputs;   // leaves only
  std::vector<std::size_t> slots;      // leaves only
  std::string tag;                     // switch tag for sigmoid leaves

  bool is_leaf() const { return kind != NodeKind::sum && kind != NodeKind::product; }

  static KernelExpr sum(std::vector<KernelExpr> children);
  static KernelExpr product(std::vector<KernelExpr> children);
};

// Structural checks: composite arity, slot ranges, leaf arities, and that
// switch leaves sharing a tag share slots and binding.
void validate(const KernelExpr& expr, const ParamVector& params);

// Throws ConfigError if any leaf column is missing from `x`.
void check_columns(const KernelExpr& expr, const Inputs& x);

// Indices of every parameter slot referenced anywhere in the tree.
std::vector<std::size_t> referenced_slots(const KernelExpr& expr);

// Sets shift/scale on SE leaf bindings to the column mean/std of `x`
// (after the feature map). Other leaves keep raw units.
void standardize_se_inputs(KernelExpr& expr, const Inputs& x);

// Collects every switch leaf, one entry per distinct tag, in first-seen order.
struct SwitchInfo {
  std::string tag;
  ColumnBinding input;
  std::size_t a_slot;
  std::size_t x0_slot;
};
std::vector<SwitchInfo> switches(const KernelExpr& expr);

// Registers leaf parameters with generated names and data-informed initial
// values, returning the leaf nodes. Names:
//   se<k>.variance, se<k>.lengthscale[<col>]
//   poly2_<k>.variance, poly2_<k>.c
//   sdof<k>.variance, sdof<k>.mass, sdof<k>.damping, sdof<k>.omega_n
//   switch.<tag>.a, switch.<tag>.x0
class KernelBuilder {
 public:
  // `data` supplies ranges for initial values and bounds; may be null.
  KernelBuilder(ParamVector& params, const Inputs* data);

  KernelExpr se(std::vector<ColumnBinding> inputs);
  KernelExpr poly2(std::vector<ColumnBinding> inputs);
  KernelExpr sdof(ColumnBinding input);
  KernelExpr sigmoid(ColumnBinding input, const std::string& tag);
  KernelExpr sigmoid_neg(ColumnBinding input, const std::string& tag);

 private:
  KernelExpr switch_leaf(NodeKind kind, ColumnBinding input, const std::string& tag);
  std::vector<double> feature_values(const ColumnBinding& b) const;

  ParamVector& params_;
  const Inputs* data_;
  int n_se_ = 0;
  int n_poly2_ = 0;
  int n_sdof_ = 0;
};

}  // namespace cpk
