#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cpk {

// N x D input matrix with named columns.
struct Inputs {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows are points

  Eigen::Index rows() const { return values.rows(); }
  std::optional<std::size_t> find(std::string_view column) const;
  std::size_t index(std::string_view column) const;  // throws ConfigError
  Inputs select_rows(const std::vector<std::size_t>& rows) const;
  void validate() const;  // unique names, finite values
};

struct Dataset {
  Inputs x;
  Eigen::VectorXd y;
  std::vector<std::size_t> held_out;  // optional test split

  Eigen::Index size() const { return y.size(); }
  Dataset select_rows(const std::vector<std::size_t>& rows) const;
  // N >= 1, consistent sizes, finite entries, unique column names.
  void validate() const;
};

// Random split into (train, test) index sets; train has round(frac * N)
// entries. Deterministic in the seed.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> random_split(std::size_t n,
                                                                          double train_frac,
                                                                          std::uint64_t seed);

// About `count` of the rows 0..n-1 as runs of `block` consecutive rows, one
// run at a random offset inside each of count/block equal strata. Keeps
// short lags for fitting fast dynamics. Sorted; deterministic in the seed.
std::vector<std::size_t> block_subset(std::size_t n, std::size_t count, std::size_t block, std::uint64_t seed);

}  // namespace cpk
