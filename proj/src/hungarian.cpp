#include "o2f/hungarian.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace o2f {

std::vector<std::size_t> solve_min_cost_assignment(const CostMatrix& cost) {
  const std::size_t n = cost.rows;
  const std::size_t m = cost.cols;
  if (n > m) {
    throw std::invalid_argument("solve_min_cost_assignment: more rows than columns");
  }
  for (double v : cost.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("solve_min_cost_assignment: non-finite cost");
  }
  if (n == 0) return {};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = 0;
  // 1-based arrays; column 0 is the virtual root of each augmenting search.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match_of_col(m + 1, kNone), way(m + 1, 0);

  for (std::size_t row = 1; row <= n; ++row) {
    match_of_col[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[col0] = 1;
      const std::size_t r0 = match_of_col[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= m; ++c) {
        if (used[c]) continue;
        const double reduced = cost(r0 - 1, c - 1) - u[r0] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= m; ++c) {
        if (used[c]) {
          u[match_of_col[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match_of_col[col0] != kNone);
    // Augment along the alternating path back to the root.
    do {
      const std::size_t col1 = way[col0];
      match_of_col[col0] = match_of_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<std::size_t> assignment(n, 0);
  for (std::size_t c = 1; c <= m; ++c) {
    if (match_of_col[c] != kNone) assignment[match_of_col[c] - 1] = c - 1;
  }
  return assignment;
}

}  // namespace o2f
