#pragma once

#include <vector>

namespace scf::assign {

// Cost at or above this value marks a pair as forbidden. Real costs must
// stay far below it so that using any allowed edge is always cheaper than
// leaving both sides unmatched, which makes the solver maximize the number
// of allowed matches first and total cost second.
inline constexpr double kForbidden = 1e9;

// Minimum-total-cost one-to-one assignment on a row-major n_rows x n_cols
// cost matrix (shortest-augmenting-path method, O(n^3)). Returns, per row,
// the matched column or -1. Deterministic for a given matrix.
std::vector<int> solve(const std::vector<double>& cost, int n_rows, int n_cols);

}  // namespace scf::assign
