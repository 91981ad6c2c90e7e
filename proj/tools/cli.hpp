#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpk/gp.hpp"
#include "cpk/kernel_spec.hpp"
#include "cpk/optim.hpp"
#include "cpk/vhgp.hpp"

namespace cpk::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;
inline constexpr int kExitOptimization = 5;

struct ParamOverride {
  std::optional<double> value;
  std::optional<double> lower;
  std::optional<double> upper;
  bool fixed = false;
};

// Scoring region: rows whose `column` lies in [lo, hi].
struct RegionSpec {
  std::string name;
  std::string column;
  double lo = 0.0;
  double hi = 0.0;
};

// JSON run configuration. Relative paths are resolved against the
// directory holding the config file.
struct RunConfig {
  std::filesystem::path base_dir;
  std::filesystem::path data;
  std::vector<std::string> inputs;
  std::string target = "y";
  std::string kernel;
  ColumnGroups groups;
  std::map<std::string, ParamOverride> params;
  bool heteroscedastic = false;
  double noise_init = 0.1;
  double noise_lower = 1e-6;
  double noise_upper = 10.0;
  bool standardize_inputs = true;
  OptConfig optimizer;
  VhgpConfig vhgp;
  std::size_t fit_subset = 0;  // 0: fit hyperparameters on every training row
  std::size_t fit_block = 0;   // >0: subset drawn as runs of consecutive rows
  double train_frac = 1.0;
  int decimate = 0;
  std::uint64_t seed = 0;
  std::vector<RegionSpec> regions;
  nlohmann::json synth;
  nlohmann::json sample;

  static RunConfig parse(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// Applies overrides by name; unknown names raise ConfigError.
void apply_overrides(ParamVector& params, const std::map<std::string, ParamOverride>& overrides);

// Exit code for a library error; anything unrecognised maps to the
// configuration code.
int exit_code(const std::exception& e);

// Runs one command line; returns the process exit code. Diagnostics go to
// stderr as a single line.
int run(int argc, const char* const* argv);

}  // namespace cpk::cli
