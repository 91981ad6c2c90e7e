#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cpk/dataset.hpp"
#include "cpk/kernel_expr.hpp"
#include "cpk/params.hpp"

namespace cpk {

// Kernel description language:
//
//   expr   := term ('+' term)*
//   term   := factor ('*' factor)*
//   factor := kernel '(' args ')' | '(' expr ')'
//   kernel := se | poly2 | sdof | sw | swneg
//   column := name | cos2 '(' name ')' | neg '(' name ')'
//
//   se(column, ...)  poly2(column, ...)  sdof(column)
//   sw(column, tag)  sw(name, cos2, tag)  swneg(...)
//
// Parentheses are kept as written, so "(a + b) + c" is a sum nested in a sum.
struct SpecColumn {
  std::string name;
  Feature feature = Feature::identity;
  bool operator==(const SpecColumn&) const = default;
};

struct SpecNode {
  enum class Kind { sum, product, kernel };
  Kind kind = Kind::kernel;
  std::string kernel;               // "se", "poly2", "sdof", "sw", "swneg"
  std::vector<SpecColumn> columns;  // kernel arguments
  std::string tag;                  // sw / swneg
  std::vector<SpecNode> children;   // sum / product
  int line = 1;
  int column = 1;

  // Structural equality; source positions are ignored.
  bool operator==(const SpecNode& other) const;
};

// Throws ParseError with 1-based line and column.
SpecNode parse_kernel_spec(std::string_view text);

// Canonical text; parse_kernel_spec(print_kernel_spec(n)) == n.
std::string print_kernel_spec(const SpecNode& node);

// Named column lists, e.g. "flight" -> {ch1, ch2, ch3}. A kernel argument
// matching a group name expands to its members (same feature map).
using ColumnGroups = std::map<std::string, std::vector<std::string>>;

// Builds the expression and registers its parameters in `params`.
// Columns are checked against `data` when it is given (ConfigError).
KernelExpr build_kernel(const SpecNode& spec, ParamVector& params, const Inputs* data,
                        const ColumnGroups& groups = {});

}  // namespace cpk
