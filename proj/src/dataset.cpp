#include "cpk/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cpk/error.hpp"
#include "cpk/rng.hpp"

namespace cpk {

std::optional<std::size_t> Inputs::find(std::string_view column) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == column) return i;
  return std::nullopt;
}

std::size_t Inputs::index(std::string_view column) const {
  if (auto i = find(column)) return *i;
  throw ConfigError("unknown column '" + std::string(column) + "'");
}

Inputs Inputs::select_rows(const std::vector<std::size_t>& rows) const {
  Inputs out;
  out.columns = columns;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.values.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

void Inputs::validate() const {
  if (static_cast<Eigen::Index>(columns.size()) != values.cols())
    throw DataError("column names do not match input matrix width");
  std::set<std::string> seen;
  for (const auto& c : columns)
    if (!seen.insert(c).second) throw DataError("duplicate column name '" + c + "'");
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      if (!std::isfinite(values(i, j)))
        throw DataError("non-finite input at row " + std::to_string(i) + ", column '" +
                        columns[static_cast<std::size_t>(j)] + "'");
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.x = x.select_rows(rows);
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.y[static_cast<Eigen::Index>(r)] = y[static_cast<Eigen::Index>(rows[r])];
  return out;
}

void Dataset::validate() const {
  if (y.size() < 1) throw DataError("dataset is empty");
  if (x.rows() != y.size()) throw DataError("inputs and targets differ in length");
  x.validate();
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isfinite(y[i])) throw DataError("non-finite target at row " + std::to_string(i));
  for (auto h : held_out)
    if (h >= static_cast<std::size_t>(y.size())) throw DataError("held-out index out of range");
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> random_split(std::size_t n,
                                                                          double train_frac,
                                                                          std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac <= 1.0))
    throw ConfigError("train fraction must lie in (0, 1]");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::lround(train_frac * static_cast<double>(n)));
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

std::vector<std::size_t> block_subset(std::size_t n, std::size_t count, std::size_t block, std::uint64_t seed) {
  if (block == 0) throw ConfigError("block length must be positive");
  if (count >= n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  const std::size_t strata = std::max<std::size_t>(1, count / block);
  const std::size_t width = n / strata;
  if (width < block) throw ConfigError("block length exceeds the stratum width");
  Rng rng(seed);
  std::vector<std::size_t> rows;
  rows.reserve(strata * block);
  for (std::size_t k = 0; k < strata; ++k) {
    const std::size_t start = k * width + rng.below(width - block + 1);
    for (std::size_t j = 0; j < block; ++j) rows.push_back(start + j);
  }
  return rows;
}

}  // namespace cpk
