// Copyright 2026 The Rebasin Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rebasin/lap.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "rebasin/errors.hpp"

namespace rebasin {

Permutation::Permutation(std::vector<int> map) : map_(std::move(map)) {
  if (!is_bijection(map_)) {
    throw InvalidInput("permutation of size " + std::to_string(map_.size()) +
                       " is not a bijection");
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<int> map(n);
  std::iota(map.begin(), map.end(), 0);
  return Permutation(std::move(map));
}

Permutation Permutation::random(std::size_t n, std::mt19937_64& rng) {
  std::vector<int> map(n);
  std::iota(map.begin(), map.end(), 0);
  // Fisher-Yates with explicit index draws so the sequence does not depend
  // on the standard library's std::shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(map[i - 1], map[j]);
  }
  return Permutation(std::move(map));
}

Permutation Permutation::inverse() const {
  std::vector<int> inv(map_.size());
  for (std::size_t i = 0; i < map_.size(); ++i) {
    inv[static_cast<std::size_t>(map_[i])] = static_cast<int>(i);
  }
  return Permutation(std::move(inv));
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < map_.size(); ++i) {
    if (map_[i] != static_cast<int>(i)) return false;
  }
  return true;
}

Permutation compose(const Permutation& first, const Permutation& second) {
  if (first.size() != second.size()) {
    throw InvalidInput("compose: permutation sizes differ");
  }
  std::vector<int> out(first.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = first[static_cast<std::size_t>(second[i])];
  }
  return Permutation(std::move(out));
}

bool is_bijection(std::span<const int> map) {
  std::vector<char> seen(map.size(), 0);
  for (const int v : map) {
    if (v < 0 || static_cast<std::size_t>(v) >= map.size()) return false;
    if (seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = 1;
  }
  return true;
}

double assignment_objective(const ProfitMatrix& profit,
                            const Permutation& perm) {
  if (perm.size() != profit.rows() || profit.rows() != profit.cols()) {
    throw InvalidInput("assignment_objective: size mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    total += profit(i, static_cast<std::size_t>(perm[i]));
  }
  return total;
}

namespace {

void validate_profit(const ProfitMatrix& profit) {
  if (profit.rows() != profit.cols()) {
    throw InvalidInput("profit matrix must be square, got " +
                       std::to_string(profit.rows()) + "x" +
                       std::to_string(profit.cols()));
  }
  if (!profit.all_finite()) {
    throw InvalidInput("profit matrix contains non-finite entries");
  }
}

// Shortest augmenting path solver on a minimization cost matrix, following
// the dense Jonker-Volgenant family as described by Crouse. Dual potentials
// u (rows) and v (columns) keep reduced costs non-negative.
class AugmentingPathSolver {
 public:
  explicit AugmentingPathSolver(const Matrix<double>& cost)
      : cost_(cost),
        n_(cost.rows()),
        u_(n_, 0.0),
        v_(n_, 0.0),
        path_(n_, -1),
        col_for_row_(n_, -1),
        row_for_col_(n_, -1),
        shortest_(n_),
        visited_row_(n_),
        visited_col_(n_),
        remaining_(n_) {}

  std::vector<int> solve() {
    for (std::size_t row = 0; row < n_; ++row) {
      double min_val = 0.0;
      const int sink = find_path(row, min_val);

      u_[row] += min_val;
      for (std::size_t i = 0; i < n_; ++i) {
        if (visited_row_[i] && i != row) {
          u_[i] += min_val -
                   shortest_[static_cast<std::size_t>(col_for_row_[i])];
        }
      }
      for (std::size_t j = 0; j < n_; ++j) {
        if (visited_col_[j]) v_[j] -= min_val - shortest_[j];
      }

      int j = sink;
      while (true) {
        const int i = path_[static_cast<std::size_t>(j)];
        row_for_col_[static_cast<std::size_t>(j)] = i;
        std::swap(col_for_row_[static_cast<std::size_t>(i)], j);
        if (static_cast<std::size_t>(i) == row) break;
      }
    }
    return col_for_row_;
  }

 private:
  int find_path(std::size_t start_row, double& min_val) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::size_t num_remaining = n_;
    for (std::size_t it = 0; it < n_; ++it) remaining_[it] = n_ - it - 1;
    std::fill(visited_row_.begin(), visited_row_.end(), false);
    std::fill(visited_col_.begin(), visited_col_.end(), false);
    std::fill(shortest_.begin(), shortest_.end(), kInf);

    min_val = 0.0;
    std::size_t i = start_row;
    int sink = -1;
    while (sink == -1) {
      std::size_t best = n_;
      double lowest = kInf;
      visited_row_[i] = true;
      for (std::size_t it = 0; it < num_remaining; ++it) {
        const std::size_t j = remaining_[it];
        const double reduced = min_val + cost_(i, j) - u_[i] - v_[j];
        if (reduced < shortest_[j]) {
          path_[j] = static_cast<int>(i);
          shortest_[j] = reduced;
        }
        if (shortest_[j] < lowest ||
            (shortest_[j] == lowest && row_for_col_[j] == -1)) {
          lowest = shortest_[j];
          best = it;
        }
      }
      min_val = lowest;
      const std::size_t j = remaining_[best];
      if (row_for_col_[j] == -1) {
        sink = static_cast<int>(j);
      } else {
        i = static_cast<std::size_t>(row_for_col_[j]);
      }
      visited_col_[j] = true;
      remaining_[best] = remaining_[--num_remaining];
    }
    return sink;
  }

  const Matrix<double>& cost_;
  std::size_t n_;
  std::vector<double> u_;
  std::vector<double> v_;
  std::vector<int> path_;
  std::vector<int> col_for_row_;
  std::vector<int> row_for_col_;
  std::vector<double> shortest_;
  std::vector<bool> visited_row_;
  std::vector<bool> visited_col_;
  std::vector<std::size_t> remaining_;
};

}  // namespace

Permutation solve_lap(const ProfitMatrix& profit) {
  validate_profit(profit);
  const std::size_t n = profit.rows();
  if (n == 0) return Permutation();

  // Maximization is solved as minimization of the negated profit, shifted so
  // every cost is non-negative. The shift changes every assignment's total by
  // the same amount.
  double max_entry = -std::numeric_limits<double>::infinity();
  for (const double v : profit.values()) max_entry = std::max(max_entry, v);
  Matrix<double> cost(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = max_entry - profit(i, j);
  }
  return Permutation(AugmentingPathSolver(cost).solve());
}

Permutation brute_force_lap(const ProfitMatrix& profit) {
  validate_profit(profit);
  const std::size_t n = profit.rows();
  if (n > kBruteForceLapMaxDim) {
    throw SizeLimitError("brute_force_lap supports d <= " +
                         std::to_string(kBruteForceLapMaxDim) + ", got " +
                         std::to_string(n));
  }
  std::vector<int> current(n);
  std::iota(current.begin(), current.end(), 0);
  std::vector<int> best = current;
  double best_value = -std::numeric_limits<double>::infinity();
  do {
    double value = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      value += profit(i, static_cast<std::size_t>(current[i]));
    }
    // Strict comparison keeps the lexicographically first optimum.
    if (value > best_value) {
      best_value = value;
      best = current;
    }
  } while (std::next_permutation(current.begin(), current.end()));
  return Permutation(std::move(best));
}

}  // namespace rebasin
