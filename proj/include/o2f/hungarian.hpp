#pragma once

#include <cstddef>
#include <vector>

namespace o2f {

/// Dense row-major cost matrix with rows <= cols.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Minimum-cost assignment of every row to a distinct column
/// (Kuhn-Munkres with potentials, O(rows^2 * cols)). Returns the column
/// chosen for each row. Throws std::invalid_argument if rows > cols.
std::vector<std::size_t> solve_min_cost_assignment(const CostMatrix& cost);

}  // namespace o2f
