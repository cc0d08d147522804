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

#ifndef REBASIN_LAP_HPP_
#define REBASIN_LAP_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rebasin/matrix.hpp"

namespace rebasin {

// Square matrix of profits; entry (i, j) is the gain of matching row i of the
// reference to unit j of the candidate.
using ProfitMatrix = Matrix<double>;

// A bijection on {0, ..., n-1}. Row i of the reference is matched to unit
// map[i] of the candidate; as a matrix, P(i, map[i]) = 1. Applying P to the
// rows of a matrix M gives (P M)(i, :) = M(map[i], :).
class Permutation {
 public:
  Permutation() = default;
  // Throws InvalidInput unless `map` is a bijection.
  explicit Permutation(std::vector<int> map);

  static Permutation identity(std::size_t n);
  static Permutation random(std::size_t n, std::mt19937_64& rng);

  std::size_t size() const { return map_.size(); }
  int operator[](std::size_t i) const { return map_[i]; }
  const std::vector<int>& map() const { return map_; }

  Permutation inverse() const;
  bool is_identity() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> map_;
};

// Matrix product P_second * P_first: applying `first` and then `second` to
// the rows of M equals applying compose(first, second). Index form:
// result[i] = first[second[i]].
Permutation compose(const Permutation& first, const Permutation& second);

bool is_bijection(std::span<const int> map);

// sum_i profit(i, perm[i]), accumulated in row order.
double assignment_objective(const ProfitMatrix& profit, const Permutation& perm);

// Exact maximum-profit assignment (shortest augmenting path with dual
// potentials, O(d^3)). Ties between equally good assignments are resolved
// deterministically by the search order: rows are inserted in increasing
// index order and, among columns with equal reduced path cost, an unassigned
// column is preferred over an assigned one.
//
// Throws InvalidInput for a non-square or non-finite matrix.
Permutation solve_lap(const ProfitMatrix& profit);

inline constexpr std::size_t kBruteForceLapMaxDim = 9;

// Exhaustive enumeration over all d! assignments. Among optimal assignments
// the lexicographically smallest is returned. Throws SizeLimitError for
// d > kBruteForceLapMaxDim.
Permutation brute_force_lap(const ProfitMatrix& profit);

}  // namespace rebasin

#endif  // REBASIN_LAP_HPP_
