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

// Permutation selection: given a reference model A and a candidate model B,
// find hidden-unit permutations of B that bring it close to A.
//
// Every matcher returns a PermutationSet `p` meant to be applied to B, i.e.
// apply_permutation(B, p) is the aligned model.

#ifndef REBASIN_MATCHING_HPP_
#define REBASIN_MATCHING_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rebasin/dataset.hpp"
#include "rebasin/model.hpp"
#include "rebasin/train.hpp"

namespace rebasin {

// vec(A) . vec(p(B)) including biases:
//   sum_l <W_l^A, P_l W_l^B P_{l-1}^T>_F + <b_l^A, P_l b_l^B>
// with P_0 = P_L = I. Evaluated by direct indexing, without materializing
// p(B).
template <typename T>
double soblap_objective(const Mlp<T>& a, const Mlp<T>& b,
                        const PermutationSet& perms);

// One accepted coordinate update of the weight-matching descent.
struct MatchingUpdate {
  std::size_t pass = 0;
  std::size_t layer = 0;
  double gain = 0.0;  // increase of the layer-local assignment objective
  const PermutationSet* perms = nullptr;  // state after the update
};

struct WeightMatchingOptions {
  std::uint64_t seed = 0;  // drives the random layer order of each pass
  bool include_bias = true;
  std::size_t max_passes = 100;
  std::optional<PermutationSet> init;  // identity when empty
  std::function<void(const MatchingUpdate&)> on_update;
};

struct WeightMatchingResult {
  PermutationSet perms;
  std::size_t passes = 0;   // including the final pass with no change
  std::size_t updates = 0;  // accepted layer updates
  bool converged = false;   // false only if max_passes was exhausted
};

// Coordinate descent over hidden layers. Each step replaces P_l by the
// solution of the assignment problem
//   W_l^A P_{l-1} (W_l^B)^T + (W_{l+1}^A)^T P_{l+1} W_{l+1}^B
//   [+ b_l^A (b_l^B)^T]
// and keeps it only if it strictly improves the layer objective, so the
// global objective increases with every accepted step and the loop stops
// after a full pass without a change.
template <typename T>
WeightMatchingResult weight_matching(const Mlp<T>& a, const Mlp<T>& b,
                                     const WeightMatchingOptions& options);

template <typename T>
PermutationSet weight_matching(const Mlp<T>& a, const Mlp<T>& b,
                               std::uint64_t seed);

inline constexpr double kBruteForceSoblapMaxStates = 1e6;

// Exhaustive search over all permutation sets. Layer 0 is the most
// significant position of the lexicographic order used for tie-breaking.
// Throws SizeLimitError when prod_l (d_l)! exceeds
// kBruteForceSoblapMaxStates.
template <typename T>
PermutationSet brute_force_soblap(const Mlp<T>& a, const Mlp<T>& b);

// Single forward pass: P_l = argmax <P, W_l^A P_{l-1} (W_l^B)^T
// [+ b_l^A (b_l^B)^T]>, earlier layers are never revisited and later
// layers are ignored.
template <typename T>
PermutationSet greedy_unidirectional_matching(const Mlp<T>& a,
                                              const Mlp<T>& b,
                                              bool include_bias = true);

// Layer-wise argmax <P, Z^A (Z^B)^T>_F, equivalently the permutation that
// minimizes sum_i ||Z^A_{:,i} - P Z^B_{:,i}||^2.
PermutationSet activation_matching(const ActivationRecord& acts_a,
                                   const ActivationRecord& acts_b);

struct ZeroVarianceUnit {
  std::size_t layer = 0;
  char model = 'A';  // 'A' or 'B'
  std::size_t unit = 0;
};

struct CorrelationMatchingResult {
  PermutationSet perms;
  std::vector<ZeroVarianceUnit> zero_variance;
};

// Layer-wise argmax over Pearson cross-correlation coefficients. Units with
// zero variance get a zero correlation row (or column) and are reported.
CorrelationMatchingResult correlation_matching(const ActivationRecord& acts_a,
                                               const ActivationRecord& acts_b);

struct SteConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::size_t steps = 1000;
  std::size_t batch_size = 128;
  OptimizerKind optimizer = OptimizerKind::kSgdMomentum;
  std::uint64_t seed = 0;
  // Rows (taken from the front of the training set) used to score candidate
  // permutations by midpoint loss. 0 means all rows.
  std::size_t eval_rows = 2000;
  // When false the projection is skipped: the forward pass uses the free
  // parameters directly and the returned permutation is the identity.
  bool project = true;
  // Start each projection from the previous step's permutation.
  bool warm_start = true;
  // Batches come from BatchSampler(rows, batch_size, derive_seed(seed, 1)).

  void validate() const;
};

struct SteResult {
  PermutationSet perms;
  std::size_t best_step = 0;
  double best_loss = 0.0;          // midpoint loss on the scoring rows
  std::vector<double> loss_trace;  // midpoint batch loss at every step
  std::size_t projections_changed = 0;
};

// Straight-through estimator: optimizes free weights B~ (initialized to A)
// so that the midpoint 0.5 (A + proj(B~)) has low loss, where proj(B~) is
// weight matching of B onto B~. Gradients of the midpoint loss flow to B~ as
// if proj were the identity. Returns the permutation whose midpoint had the
// lowest loss on the scoring rows; with steps = 0 this is exactly
// weight_matching(a, b, config.seed).
SteResult ste_matching(const ModelWeights& a, const ModelWeights& b,
                       const Dataset& data, const SteConfig& config);

struct MergeManyOptions {
  std::uint64_t seed = 0;
  std::size_t max_rounds = 100;
  bool include_bias = true;
};

struct MergeManyResult {
  ModelWeights merged;
  std::vector<ModelWeights> aligned;    // the input models after alignment
  std::vector<PermutationSet> perms;    // aligned[i] = perms[i](models[i])
  std::size_t rounds = 0;               // including the final quiet round
  bool converged = false;
};

// Repeatedly aligns each model (in random order) to the mean of the others
// until a full round leaves every model unchanged; returns the mean of the
// aligned models.
MergeManyResult merge_many(std::span<const ModelWeights> models,
                           const MergeManyOptions& options);
ModelWeights merge_many(std::span<const ModelWeights> models,
                        std::uint64_t seed);

}  // namespace rebasin

#endif  // REBASIN_MATCHING_HPP_
