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

#include "rebasin/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rebasin/errors.hpp"
#include "rebasin/kernels.hpp"
#include "rebasin/random.hpp"

namespace rebasin {
namespace {

// Relative margin a new assignment must beat the current one by. Keeps
// rounding noise from toggling between equally good permutations.
constexpr double kAcceptTolerance = 1e-12;

// M(:, perm[j]) moved to column j.
Matrix<double> permute_cols(const Matrix<double>& m, const Permutation& perm) {
  Matrix<double> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out(i, j) = m(i, static_cast<std::size_t>(perm[j]));
    }
  }
  return out;
}

// M(perm[i], :) moved to row i.
Matrix<double> permute_rows(const Matrix<double>& m, const Permutation& perm) {
  Matrix<double> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto src = m.row(static_cast<std::size_t>(perm[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void add_bias_outer(ProfitMatrix& profit, const std::vector<double>& ba,
                    const std::vector<double>& bb) {
  for (std::size_t i = 0; i < profit.rows(); ++i) {
    for (std::size_t k = 0; k < profit.cols(); ++k) {
      profit(i, k) += ba[i] * bb[k];
    }
  }
}

// Term coming from the incoming weights of hidden layer h, given the
// permutation of the layer below.
ProfitMatrix incoming_profit(const Mlp<double>& a, const Mlp<double>& b,
                             const PermutationSet& perms, std::size_t h,
                             bool include_bias) {
  const auto& wa = a.layers[h].weight;
  const auto& wb = b.layers[h].weight;
  ProfitMatrix profit = h == 0
                            ? kernels::matmul_abt(wa, wb)
                            : kernels::matmul_abt(wa, permute_cols(wb, perms[h - 1]));
  if (include_bias) add_bias_outer(profit, a.layers[h].bias, b.layers[h].bias);
  return profit;
}

ProfitMatrix layer_profit(const Mlp<double>& a, const Mlp<double>& b,
                          const PermutationSet& perms, std::size_t h,
                          bool include_bias) {
  ProfitMatrix profit = incoming_profit(a, b, perms, h, include_bias);
  const std::size_t next = h + 1;
  const auto& wa = a.layers[next].weight;
  const auto& wb = b.layers[next].weight;
  const bool next_is_hidden = next + 1 < a.num_layers();
  const ProfitMatrix outgoing =
      next_is_hidden ? kernels::matmul_atb(wa, permute_rows(wb, perms[next]))
                     : kernels::matmul_atb(wa, wb);
  for (std::size_t i = 0; i < profit.size(); ++i) {
    profit.data()[i] += outgoing.data()[i];
  }
  return profit;
}

bool strictly_better(double candidate, double current) {
  return candidate - current >
         kAcceptTolerance * std::max(1.0, std::abs(current));
}

double count_permutation_sets(const std::vector<std::size_t>& widths) {
  double states = 1.0;
  for (const std::size_t d : widths) {
    for (std::size_t k = 2; k <= d; ++k) states *= static_cast<double>(k);
  }
  return states;
}

}  // namespace

template <typename T>
double soblap_objective(const Mlp<T>& a, const Mlp<T>& b,
                        const PermutationSet& perms) {
  check_same_shape(a, b, "soblap_objective");
  const std::size_t num_layers = a.num_layers();
  if (perms.size() + 1 != num_layers) {
    throw InvalidInput("soblap_objective: expected " +
                       std::to_string(num_layers - 1) + " permutations, got " +
                       std::to_string(perms.size()));
  }
  const auto widths = a.hidden_widths();
  for (std::size_t h = 0; h < widths.size(); ++h) {
    if (perms[h].size() != widths[h]) {
      throw InvalidInput("soblap_objective: permutation size mismatch");
    }
  }

  double total = 0.0;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const auto& wa = a.layers[l].weight;
    const auto& wb = b.layers[l].weight;
    const bool row_perm = l + 1 < num_layers;
    const bool col_perm = l > 0;
    for (std::size_t i = 0; i < wa.rows(); ++i) {
      const std::size_t bi =
          row_perm ? static_cast<std::size_t>(perms[l][i]) : i;
      for (std::size_t j = 0; j < wa.cols(); ++j) {
        const std::size_t bj =
            col_perm ? static_cast<std::size_t>(perms[l - 1][j]) : j;
        total += static_cast<double>(wa(i, j)) * static_cast<double>(wb(bi, bj));
      }
      total += static_cast<double>(a.layers[l].bias[i]) *
               static_cast<double>(b.layers[l].bias[bi]);
    }
  }
  return total;
}

template <typename T>
WeightMatchingResult weight_matching(const Mlp<T>& a, const Mlp<T>& b,
                                     const WeightMatchingOptions& options) {
  check_same_shape(a, b, "weight_matching");
  const auto widths = a.hidden_widths();
  WeightMatchingResult result;
  result.perms = options.init ? *options.init : PermutationSet::identity(widths);
  if (result.perms.size() != widths.size()) {
    throw InvalidInput("weight_matching: init has the wrong number of layers");
  }
  for (std::size_t h = 0; h < widths.size(); ++h) {
    if (result.perms[h].size() != widths[h]) {
      throw InvalidInput("weight_matching: init permutation size mismatch");
    }
  }
  if (widths.empty()) {
    result.converged = true;
    return result;
  }

  const Mlp<double> ad = a.template cast<double>();
  const Mlp<double> bd = b.template cast<double>();
  Rng rng(options.seed);
  std::vector<std::size_t> order(widths.size());
  std::iota(order.begin(), order.end(), 0);

  while (result.passes < options.max_passes) {
    ++result.passes;
    shuffle(order, rng);
    bool changed = false;
    for (const std::size_t h : order) {
      const ProfitMatrix profit =
          layer_profit(ad, bd, result.perms, h, options.include_bias);
      Permutation candidate = solve_lap(profit);
      if (candidate == result.perms[h]) continue;
      const double current = assignment_objective(profit, result.perms[h]);
      const double proposed = assignment_objective(profit, candidate);
      if (!strictly_better(proposed, current)) continue;
      result.perms.perms[h] = std::move(candidate);
      ++result.updates;
      changed = true;
      if (options.on_update) {
        options.on_update(MatchingUpdate{result.passes - 1, h,
                                         proposed - current, &result.perms});
      }
    }
    if (!changed) {
      result.converged = true;
      break;
    }
  }
  return result;
}

template <typename T>
PermutationSet weight_matching(const Mlp<T>& a, const Mlp<T>& b,
                               std::uint64_t seed) {
  WeightMatchingOptions options;
  options.seed = seed;
  return weight_matching(a, b, options).perms;
}

template <typename T>
PermutationSet brute_force_soblap(const Mlp<T>& a, const Mlp<T>& b) {
  check_same_shape(a, b, "brute_force_soblap");
  const auto widths = a.hidden_widths();
  const double states = count_permutation_sets(widths);
  if (states > kBruteForceSoblapMaxStates) {
    throw SizeLimitError("brute_force_soblap: " + std::to_string(states) +
                         " permutation sets exceed the limit of " +
                         std::to_string(kBruteForceSoblapMaxStates));
  }

  std::vector<std::vector<int>> maps;
  for (const std::size_t d : widths) {
    maps.emplace_back(d);
    std::iota(maps.back().begin(), maps.back().end(), 0);
  }
  auto current = [&maps] {
    PermutationSet set;
    for (const auto& m : maps) set.perms.emplace_back(m);
    return set;
  };

  PermutationSet best = current();
  double best_value = -std::numeric_limits<double>::infinity();
  while (true) {
    PermutationSet candidate = current();
    const double value = soblap_objective(a, b, candidate);
    if (value > best_value) {
      best_value = value;
      best = std::move(candidate);
    }
    // Odometer step, last layer varies fastest.
    std::size_t l = maps.size();
    while (l > 0 && !std::next_permutation(maps[l - 1].begin(), maps[l - 1].end())) {
      --l;
    }
    if (l == 0) break;
  }
  return best;
}

template <typename T>
PermutationSet greedy_unidirectional_matching(const Mlp<T>& a,
                                              const Mlp<T>& b,
                                              bool include_bias) {
  check_same_shape(a, b, "greedy_unidirectional_matching");
  const auto widths = a.hidden_widths();
  const Mlp<double> ad = a.template cast<double>();
  const Mlp<double> bd = b.template cast<double>();
  PermutationSet perms = PermutationSet::identity(widths);
  for (std::size_t h = 0; h < widths.size(); ++h) {
    perms.perms[h] = solve_lap(incoming_profit(ad, bd, perms, h, include_bias));
  }
  return perms;
}

namespace {

void check_records(const ActivationRecord& acts_a,
                   const ActivationRecord& acts_b, const char* context) {
  if (acts_a.layers.size() != acts_b.layers.size()) {
    throw InvalidInput(std::string(context) + ": layer count mismatch");
  }
  for (std::size_t l = 0; l < acts_a.layers.size(); ++l) {
    const auto& za = acts_a.layers[l];
    const auto& zb = acts_b.layers[l];
    if (za.rows() != zb.rows() || za.cols() != zb.cols()) {
      throw InvalidInput(std::string(context) + ": activation shape mismatch");
    }
    if (za.cols() == 0) {
      throw InvalidInput(std::string(context) + ": no activation rows");
    }
  }
}

// Centers every unit and scales it to unit norm; units with zero variance
// become all-zero rows and are reported.
Matrix<double> standardize(const Matrix<float>& z, std::size_t layer,
                           char model, std::vector<ZeroVarianceUnit>& zero) {
  Matrix<double> out = z.cast<double>();
  const auto n = static_cast<double>(z.cols());
  for (std::size_t u = 0; u < out.rows(); ++u) {
    auto row = out.row(u);
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / n;
    double ss = 0.0;
    for (double& v : row) {
      v -= mean;
      ss += v * v;
    }
    if (ss > 0.0) {
      const double inv = 1.0 / std::sqrt(ss);
      for (double& v : row) v *= inv;
    } else {
      std::fill(row.begin(), row.end(), 0.0);
      zero.push_back({layer, model, u});
    }
  }
  return out;
}

}  // namespace

PermutationSet activation_matching(const ActivationRecord& acts_a,
                                   const ActivationRecord& acts_b) {
  check_records(acts_a, acts_b, "activation_matching");
  PermutationSet perms;
  for (std::size_t l = 0; l < acts_a.layers.size(); ++l) {
    perms.perms.push_back(solve_lap(kernels::matmul_abt(
        acts_a.layers[l].cast<double>(), acts_b.layers[l].cast<double>())));
  }
  return perms;
}

CorrelationMatchingResult correlation_matching(const ActivationRecord& acts_a,
                                               const ActivationRecord& acts_b) {
  check_records(acts_a, acts_b, "correlation_matching");
  CorrelationMatchingResult result;
  for (std::size_t l = 0; l < acts_a.layers.size(); ++l) {
    const auto za = standardize(acts_a.layers[l], l, 'A', result.zero_variance);
    const auto zb = standardize(acts_b.layers[l], l, 'B', result.zero_variance);
    result.perms.perms.push_back(solve_lap(kernels::matmul_abt(za, zb)));
  }
  return result;
}

void SteConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidInput("ste: learning_rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InvalidInput("ste: momentum must lie in [0, 1)");
  }
  if (batch_size == 0) throw InvalidInput("ste: batch_size must be positive");
}

SteResult ste_matching(const ModelWeights& a, const ModelWeights& b,
                       const Dataset& data, const SteConfig& config) {
  config.validate();
  check_same_shape(a, b, "ste_matching");
  if (data.size() == 0) throw InvalidInput("ste_matching: empty dataset");
  if (data.dim() != a.input_dim()) {
    throw InvalidInput("ste_matching: dataset dimension does not match model");
  }

  const Dataset scoring =
      config.eval_rows == 0 ? data : head(data, config.eval_rows);
  auto midpoint_score = [&](const PermutationSet& perms) {
    return loss_and_accuracy(interpolate(a, apply_permutation(b, perms), 0.5),
                             scoring)
        .loss;
  };

  Optimizer<float> optimizer(config.optimizer, config.learning_rate,
                             config.momentum, 0.9, 0.999, 1e-8, 0.0);
  BatchSampler sampler(data.size(), config.batch_size,
                       derive_seed(config.seed, 1));

  ModelWeights free = a;
  SteResult result;
  result.perms = PermutationSet::identity_for(a);
  PermutationSet current = result.perms;
  result.loss_trace.reserve(config.steps);

  for (std::size_t step = 0; step <= config.steps; ++step) {
    if (config.project) {
      WeightMatchingOptions wm;
      wm.seed = step == 0 ? config.seed : derive_seed(config.seed, 2 + step);
      if (step > 0 && config.warm_start) wm.init = current;
      PermutationSet proj = weight_matching(free, b, wm).perms;
      if (step == 0 || proj != current) {
        if (step > 0) ++result.projections_changed;
        current = std::move(proj);
        const double loss = midpoint_score(current);
        if (step == 0 || loss < result.best_loss) {
          result.best_loss = loss;
          result.best_step = step;
          result.perms = current;
        }
      }
    }
    if (step == config.steps) break;

    const auto rows = sampler.next();
    const auto x = gather_rows<float>(data, rows);
    const auto labels = gather_labels(data, rows);
    const ModelWeights mid =
        config.project ? interpolate(a, apply_permutation(b, current), 0.5)
                       : interpolate(a, free, 0.5);
    auto lg = loss_and_gradient(mid, x, labels);
    if (!std::isfinite(lg.loss)) throw DivergenceError(step);
    result.loss_trace.push_back(lg.loss);
    for (auto span : lg.grad.parameter_spans()) {
      for (float& g : span) g *= 0.5f;
    }
    optimizer.step(free, lg.grad);
  }

  if (!config.project) {
    result.best_loss = midpoint_score(result.perms);
  }
  return result;
}

MergeManyResult merge_many(std::span<const ModelWeights> models,
                           const MergeManyOptions& options) {
  if (models.size() < 2) {
    throw InvalidInput("merge_many: need at least two models");
  }
  for (std::size_t i = 1; i < models.size(); ++i) {
    check_same_shape(models[0], models[i], "merge_many");
  }

  const std::size_t n = models.size();
  MergeManyResult result;
  result.aligned.assign(models.begin(), models.end());
  result.perms.assign(n, PermutationSet::identity_for(models[0]));

  Rng rng(options.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t call = 0;

  while (result.rounds < options.max_rounds) {
    ++result.rounds;
    shuffle(order, rng);
    bool changed = false;
    for (const std::size_t i : order) {
      std::vector<ModelWeights> others;
      others.reserve(n - 1);
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) others.push_back(result.aligned[j]);
      }
      const ModelWeights mean = average<float>(others);
      WeightMatchingOptions wm;
      wm.seed = derive_seed(options.seed, call++);
      wm.include_bias = options.include_bias;
      const PermutationSet p = weight_matching(mean, result.aligned[i], wm).perms;
      if (p.is_identity()) continue;
      result.aligned[i] = apply_permutation(result.aligned[i], p);
      result.perms[i] = compose(result.perms[i], p);
      changed = true;
    }
    if (!changed) {
      result.converged = true;
      break;
    }
  }
  result.merged = average<float>(result.aligned);
  return result;
}

ModelWeights merge_many(std::span<const ModelWeights> models,
                        std::uint64_t seed) {
  MergeManyOptions options;
  options.seed = seed;
  return merge_many(models, options).merged;
}

#define REBASIN_INSTANTIATE_MATCHING(T)                                      \
  template double soblap_objective(const Mlp<T>&, const Mlp<T>&,             \
                                   const PermutationSet&);                   \
  template WeightMatchingResult weight_matching(                             \
      const Mlp<T>&, const Mlp<T>&, const WeightMatchingOptions&);           \
  template PermutationSet weight_matching(const Mlp<T>&, const Mlp<T>&,      \
                                          std::uint64_t);                    \
  template PermutationSet brute_force_soblap(const Mlp<T>&, const Mlp<T>&);  \
  template PermutationSet greedy_unidirectional_matching(                    \
      const Mlp<T>&, const Mlp<T>&, bool);

REBASIN_INSTANTIATE_MATCHING(float)
REBASIN_INSTANTIATE_MATCHING(double)

#undef REBASIN_INSTANTIATE_MATCHING

}  // namespace rebasin
