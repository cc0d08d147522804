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

// Two hand-built 2-2-2-1 ReLU networks that solve the quadrant task
// (positive iff x1 < 0 and x2 > 0) with the same decision function, yet no
// permutation of hidden units connects them linearly without an increase in
// classification error.

#ifndef REBASIN_COUNTEREXAMPLE_HPP_
#define REBASIN_COUNTEREXAMPLE_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "rebasin/dataset.hpp"
#include "rebasin/model.hpp"

namespace rebasin {

struct CounterexamplePair {
  ModelWeights a;
  ModelWeights b;
};

// f_A(x) = -relu(-relu(-x1 + 1) + 1) - relu(relu(-x2))
// f_B(x) = -relu(relu(x1)) - relu(-relu(x2 + 1) + 1)
// On [-1, 1]^2 both equal -relu(x1) - relu(-x2).
CounterexamplePair build_counterexample();

// Label 1 iff the scalar output is >= 0.
std::vector<int> predict_sign(const ModelWeights& model, const Dataset& data);
double sign_error(const ModelWeights& model, const Dataset& data);

struct PermutationCurve {
  std::size_t perm_id = 0;  // 2 * swap(layer 0) + swap(layer 1)
  PermutationSet perms;
  std::vector<double> lambdas;
  std::vector<double> errors;
  double max_interior_error = 0.0;
  double argmax_lambda = 0.0;
  double barrier = 0.0;  // max error - mean endpoint error
};

struct NoLmcReport {
  std::vector<PermutationCurve> curves;  // ordered by perm_id
  double error_a = 0.0;
  double error_b = 0.0;
  bool endpoints_perfect = false;
  // Every permutation has an interior lambda whose error exceeds both
  // endpoint errors.
  bool all_interior_barriers = false;
  double min_barrier = 0.0;
};

// Enumerates all four permutation sets of the pair and samples the 0-1
// error along each interpolation path on `data`.
NoLmcReport verify_no_lmc(const CounterexamplePair& pair, const Dataset& data,
                          std::size_t num_lambdas = 25);

// perm_id,lambda,error
std::string counterexample_csv(const NoLmcReport& report);

}  // namespace rebasin

#endif  // REBASIN_COUNTEREXAMPLE_HPP_
