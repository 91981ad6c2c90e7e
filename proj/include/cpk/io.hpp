#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpk/dataset.hpp"
#include "cpk/gp.hpp"
#include "cpk/kernel_spec.hpp"
#include "cpk/vhgp.hpp"

namespace cpk {

// Numeric table with a header row. Cells use '.' as the decimal separator
// regardless of locale.
struct Table {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;

  std::size_t index(std::string_view column) const;  // throws ConfigError
  Eigen::VectorXd column(std::string_view name) const;
};

// Throws DataError naming the line for ragged rows, unparsable cells and
// non-finite values (including "nan" and "inf").
Table parse_csv(std::istream& in);
Table read_csv(const std::filesystem::path& path);

// Shortest round-trip formatting, so read_csv(write_csv(t)) == t.
void write_csv(std::ostream& out, const Table& table);
void write_csv(const std::filesystem::path& path, const Table& table);
std::string format_double(double v);

// Builds a dataset from named input columns and a target column.
Dataset to_dataset(const Table& table, const std::vector<std::string>& inputs, const std::string& target);
Table to_table(const Inputs& x);

// Model container.
inline constexpr int kModelFormatVersion = 1;

// Everything needed to rebuild a trained predictor. Exactly one of `gp`
// and `hgp` is set.
struct Model {
  std::string kernel_text;
  ColumnGroups groups;
  std::vector<std::string> inputs;
  std::string target;
  TargetScaler scaler;
  std::optional<GPState> gp;
  std::optional<HGPState> hgp;

  bool heteroscedastic() const { return hgp.has_value(); }
  const KernelExpr& kernel() const;
  const ParamVector& params() const;
  const Dataset& train() const;  // standardised targets

  // Predictions on the original target scale.
  Posterior predict(const Inputs& x) const;
};

// JSON text with format version, library version, kernel text, every
// parameter with bounds and transform, SE input standardisation, target
// scaler, training data and (heteroscedastic) the variational state.
std::string save_model(const Model& model);
void save_model(const std::filesystem::path& path, const Model& model);

// Throws ConfigError on a format version mismatch or an inconsistent file.
Model load_model(const std::string& text);
Model load_model(const std::filesystem::path& path);

}  // namespace cpk
