#include "scfusion/assignment.hpp"

#include <algorithm>
#include <limits>

#include "scfusion/errors.hpp"

namespace scf::assign {

std::vector<int> solve(const std::vector<double>& cost, int n_rows, int n_cols) {
  if (n_rows < 0 || n_cols < 0) throw ValidationError("cost matrix dims must be non-negative");
  if (cost.size() != static_cast<size_t>(n_rows) * n_cols)
    throw ValidationError("cost matrix size does not match its dims");
  if (n_rows == 0 || n_cols == 0) return std::vector<int>(n_rows, -1);

  // Pad to square with forbidden entries; dummy rows/columns absorb the
  // unmatched side.
  const int n = std::max(n_rows, n_cols);
  std::vector<double> a(static_cast<size_t>(n) * n, kForbidden);
  for (int r = 0; r < n_rows; ++r)
    for (int c = 0; c < n_cols; ++c) a[r * n + c] = cost[r * n_cols + c];

  const double inf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path with dual potentials, 1-indexed; p[j] is the
  // row matched to column j and column 0 is the virtual start column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(n_rows, -1);
  for (int j = 1; j <= n; ++j) {
    const int r = p[j];
    if (r >= 1 && r <= n_rows && j <= n_cols && cost[(r - 1) * n_cols + (j - 1)] < kForbidden)
      row_to_col[r - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace scf::assign
