#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "scfusion/assignment.hpp"
#include "scfusion/rng.hpp"

using namespace scf;

namespace {

struct BruteResult {
  int matches = 0;
  double cost = 0.0;
};

// Exhaustive reference: every injective partial assignment of rows to
// columns over allowed (non-forbidden) edges, ranked by most matches first,
// least total cost second. Feasible up to 7x7.
void brute_recurse(const std::vector<double>& cost, int n_rows, int n_cols, int row, uint32_t used,
                   int matches, double total, BruteResult* best) {
  if (row == n_rows) {
    if (matches > best->matches || (matches == best->matches && total < best->cost)) {
      best->matches = matches;
      best->cost = total;
    }
    return;
  }
  brute_recurse(cost, n_rows, n_cols, row + 1, used, matches, total, best);  // row unmatched
  for (int col = 0; col < n_cols; ++col) {
    if (used & (1u << col)) continue;
    const double c = cost[static_cast<size_t>(row) * n_cols + col];
    if (c >= assign::kForbidden) continue;
    brute_recurse(cost, n_rows, n_cols, row + 1, used | (1u << col), matches + 1, total + c, best);
  }
}

BruteResult brute_force(const std::vector<double>& cost, int n_rows, int n_cols) {
  BruteResult best;
  best.matches = -1;
  best.cost = 0.0;
  brute_recurse(cost, n_rows, n_cols, 0, 0, 0, 0.0, &best);
  return best;
}

BruteResult summarize(const std::vector<int>& rowmatch, const std::vector<double>& cost,
                      int n_cols) {
  BruteResult r;
  for (size_t row = 0; row < rowmatch.size(); ++row) {
    if (rowmatch[row] < 0) continue;
    ++r.matches;
    r.cost += cost[row * static_cast<size_t>(n_cols) + rowmatch[row]];
  }
  return r;
}

}  // namespace

TEST_CASE("solver agrees with exhaustive search on random instances") {
  auto g = rng::substream(41, {rng::fnv1a64("assign-brute")});
  for (int iter = 0; iter < 200; ++iter) {
    const int n_rows = 1 + static_cast<int>(rng::uniform01(g) * 7.0);
    const int n_cols = 1 + static_cast<int>(rng::uniform01(g) * 7.0);
    std::vector<double> cost(static_cast<size_t>(n_rows) * n_cols);
    for (double& c : cost)
      c = rng::uniform01(g) < 0.25 ? assign::kForbidden : rng::uniform(g, 0.0, 10.0);

    const std::vector<int> rowmatch = assign::solve(cost, n_rows, n_cols);
    REQUIRE(static_cast<int>(rowmatch.size()) == n_rows);

    // One-to-one over allowed edges only.
    std::vector<int> seen;
    for (int row = 0; row < n_rows; ++row) {
      const int col = rowmatch[static_cast<size_t>(row)];
      if (col < 0) continue;
      CHECK(col < n_cols);
      CHECK(cost[static_cast<size_t>(row) * n_cols + col] < assign::kForbidden);
      seen.push_back(col);
    }
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());

    const BruteResult want = brute_force(cost, n_rows, n_cols);
    const BruteResult got = summarize(rowmatch, cost, n_cols);
    CHECK(got.matches == want.matches);
    CHECK(got.cost == doctest::Approx(want.cost).epsilon(1e-9));
  }
}

TEST_CASE("hand-checked fixtures") {
  // Classic 3x3 with a unique optimum: rows pick 1, 0, 2.
  const std::vector<double> cost{4, 1, 3,
                                 2, 0, 5,
                                 3, 2, 2};
  const std::vector<int> m = assign::solve(cost, 3, 3);
  CHECK(m[0] == 1);
  CHECK(m[1] == 0);
  CHECK(m[2] == 2);
}

TEST_CASE("forbidden rows stay unmatched even when columns are free") {
  const double F = assign::kForbidden;
  const std::vector<double> cost{1.0, F,
                                 F, F};
  const std::vector<int> m = assign::solve(cost, 2, 2);
  CHECK(m[0] == 0);
  CHECK(m[1] == -1);
}

TEST_CASE("match count beats total cost") {
  // Matching both rows costs 10; matching only row 0 would cost 1. Two
  // matches must win.
  const double F = assign::kForbidden;
  const std::vector<double> cost{1.0, 5.0,
                                 F, 5.0};
  const std::vector<int> m = assign::solve(cost, 2, 2);
  CHECK(m[0] == 0);
  CHECK(m[1] == 1);
}

TEST_CASE("rectangular and degenerate shapes") {
  const std::vector<double> wide{3.0, 1.0, 2.0};
  CHECK(assign::solve(wide, 1, 3)[0] == 1);
  const std::vector<double> tall{3.0,
                                 1.0,
                                 2.0};
  const std::vector<int> m = assign::solve(tall, 3, 1);
  CHECK(m[0] == -1);
  CHECK(m[1] == 0);
  CHECK(m[2] == -1);
  CHECK(assign::solve({}, 0, 0).empty());
}

TEST_CASE("determinism on repeated solves") {
  auto g = rng::substream(42, {rng::fnv1a64("assign-repeat")});
  std::vector<double> cost(36);
  for (double& c : cost) c = rng::uniform(g, 0.0, 1.0);
  const std::vector<int> a = assign::solve(cost, 6, 6);
  const std::vector<int> b = assign::solve(cost, 6, 6);
  CHECK(a == b);
}
