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

#ifndef REBASIN_TRAIN_HPP_
#define REBASIN_TRAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rebasin/dataset.hpp"
#include "rebasin/model.hpp"
#include "rebasin/random.hpp"

namespace rebasin {

enum class OptimizerKind { kSgdMomentum, kAdam };

struct TrainConfig {
  std::vector<std::size_t> widths = {256, 256};
  std::size_t epochs = 2;
  std::size_t batch_size = 64;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;     // Adam only
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  // Throws InvalidInput on non-positive sizes or rates.
  void validate() const;

  // Flat key=value text; '#' starts a comment. Keys: widths (comma list),
  // epochs, batch_size, optimizer (adam | sgd-momentum), learning_rate,
  // momentum, beta1, beta2, epsilon, weight_decay, seed.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_string() const;

  // 3 x 512, Adam, lr 1e-3, 5 epochs.
  static TrainConfig mnist_full();
  // 2 x 256, Adam, lr 1e-3; the fast configuration used by tests.
  static TrainConfig desk();
};

// He-uniform weights U(-sqrt(6 / fan_in), sqrt(6 / fan_in)), zero biases.
template <typename T>
Mlp<T> init_mlp(std::span<const std::size_t> dims, std::uint64_t seed);

template <typename T>
struct LossGradient {
  double loss = 0.0;  // mean cross-entropy over the batch
  Mlp<T> grad;        // same shape as the model
};

// Mean softmax cross-entropy of the batch and its gradient by
// backpropagation.
template <typename T>
LossGradient<T> loss_and_gradient(const Mlp<T>& model, const Matrix<T>& x,
                                  std::span<const int> labels);

// Reshuffles row indices every epoch; the last batch of an epoch may be
// short.
class BatchSampler {
 public:
  BatchSampler(std::size_t num_rows, std::size_t batch_size,
               std::uint64_t seed);

  std::vector<std::size_t> next();
  // Epochs completed so far.
  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const;

 private:
  std::size_t num_rows_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

// Copies rows of `data` into a dense batch of scalar type T.
template <typename T>
Matrix<T> gather_rows(const Dataset& data, std::span<const std::size_t> rows);
std::vector<int> gather_labels(const Dataset& data,
                               std::span<const std::size_t> rows);

// In-place first-order optimizer over all parameters of an Mlp.
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double momentum,
            double beta1, double beta2, double epsilon, double weight_decay);
  static Optimizer from_config(const TrainConfig& config);
  static Optimizer sgd_momentum(double learning_rate, double momentum);

  void step(Mlp<T>& params, const Mlp<T>& grad);

 private:
  OptimizerKind kind_;
  double learning_rate_;
  double momentum_;
  double beta1_;
  double beta2_;
  double epsilon_;
  double weight_decay_;
  std::size_t steps_ = 0;
  Mlp<T> first_moment_;
  Mlp<T> second_moment_;
};

struct TrainHooks {
  // Called with epoch 0 on the initialization and after every epoch.
  std::function<void(std::size_t epoch, const ModelWeights&)> on_epoch;
  std::function<void(std::size_t step, double batch_loss)> on_step;
};

// Deterministic given (config, data): initialization and batch order derive
// from config.seed. Throws DivergenceError if a batch loss is non-finite.
ModelWeights train_mlp(const TrainConfig& config, const Dataset& data,
                       const TrainHooks& hooks = {});

inline constexpr std::size_t kDefaultActivationRows = 10000;

// Hidden activations with units as rows: layers[l] is d_l x n, column i is
// dataset row i.
struct ActivationRecord {
  std::vector<Matrix<float>> layers;

  std::size_t num_rows() const {
    return layers.empty() ? 0 : layers.front().cols();
  }
};

ActivationRecord record_activations(const ModelWeights& model,
                                    const Dataset& data,
                                    std::size_t max_rows =
                                        kDefaultActivationRows);

}  // namespace rebasin

#endif  // REBASIN_TRAIN_HPP_
