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

#ifndef REBASIN_MODEL_HPP_
#define REBASIN_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rebasin/dataset.hpp"
#include "rebasin/lap.hpp"
#include "rebasin/matrix.hpp"

namespace rebasin {

// Hidden-layer nonlinearity. The numeric value is the checkpoint code.
enum class Activation : std::uint8_t {
  kRelu = 0,
  kIdentity = 1,
};

template <typename T>
struct DenseLayer {
  Matrix<T> weight;  // out x in; row i is the incoming weights of unit i
  std::vector<T> bias;  // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// An L-layer MLP: z_{l+1} = act(W_l z_l + b_l) on hidden layers, no
// activation on the last layer (raw logits).
template <typename T>
struct Mlp {
  std::vector<DenseLayer<T>> layers;
  Activation activation = Activation::kRelu;

  // Zero weights and biases for layer sizes (d_1, ..., d_{L+1}).
  static Mlp zeros(std::span<const std::size_t> dims,
                   Activation act = Activation::kRelu);

  std::size_t num_layers() const { return layers.size(); }
  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.back().weight.rows(); }
  // (d_1, ..., d_{L+1})
  std::vector<std::size_t> dims() const;
  // (d_2, ..., d_L)
  std::vector<std::size_t> hidden_widths() const;
  std::size_t num_parameters() const;

  // Throws InvalidInput if layer shapes do not chain or a value is
  // non-finite.
  void validate() const;

  // Weight matrix then bias of every layer, in layer order.
  std::vector<std::span<T>> parameter_spans();
  std::vector<std::span<const T>> parameter_spans() const;

  template <typename U>
  Mlp<U> cast() const {
    Mlp<U> out;
    out.activation = activation;
    for (const auto& layer : layers) {
      out.layers.push_back(
          {layer.weight.template cast<U>(),
           std::vector<U>(layer.bias.begin(), layer.bias.end())});
    }
    return out;
  }

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

using ModelWeights = Mlp<float>;

// One permutation per hidden layer; perms[l] reorders the output units of
// layer l. Input and output units are never permuted.
struct PermutationSet {
  std::vector<Permutation> perms;

  static PermutationSet identity(std::span<const std::size_t> widths);
  template <typename T>
  static PermutationSet identity_for(const Mlp<T>& model) {
    const auto widths = model.hidden_widths();
    return identity(widths);
  }

  std::size_t size() const { return perms.size(); }
  const Permutation& operator[](std::size_t i) const { return perms[i]; }
  PermutationSet inverse() const;
  bool is_identity() const;

  friend bool operator==(const PermutationSet&,
                         const PermutationSet&) = default;
};

// Layer-wise compose(first, second): applying `first` then `second` to a
// model equals applying the result once.
PermutationSet compose(const PermutationSet& first,
                       const PermutationSet& second);

PermutationSet random_permutation_set(std::span<const std::size_t> widths,
                                      std::mt19937_64& rng);

// Throws InvalidInput unless both models have identical layer shapes.
template <typename T>
void check_same_shape(const Mlp<T>& a, const Mlp<T>& b, const char* context);

template <typename T>
std::vector<T> forward(const Mlp<T>& model, std::span<const T> x);

// Row-wise forward pass: x is n x d_1, result is n x d_{L+1}.
template <typename T>
Matrix<T> forward_batch(const Mlp<T>& model, const Matrix<T>& x);

// Post-activation values of every hidden layer for the rows of x; element l
// is n x d_{l+2}.
template <typename T>
std::vector<Matrix<T>> hidden_activations(const Mlp<T>& model,
                                          const Matrix<T>& x);

// W'_l = P_l W_l P_{l-1}^T and b'_l = P_l b_l with P_0 = P_L = I. The result
// computes the same function as `model`.
template <typename T>
Mlp<T> apply_permutation(const Mlp<T>& model, const PermutationSet& perms);

// (1 - lambda) a + lambda b over all weights and biases. Requires lambda in
// [0, 1]; lambda = 0 and 1 return exact copies of a and b.
template <typename T>
Mlp<T> interpolate(const Mlp<T>& a, const Mlp<T>& b, double lambda);

// Uniform average of models with identical shapes.
template <typename T>
Mlp<T> average(std::span<const Mlp<T>> models);

// vec(a) . vec(b), accumulated in double.
template <typename T>
double inner_product(const Mlp<T>& a, const Mlp<T>& b);

struct LossAccuracy {
  double loss = 0.0;      // mean softmax cross-entropy
  double accuracy = 0.0;  // top-1, first maximum wins ties
};

// Rows are evaluated in fixed-size chunks and reduced in dataset order, so
// the result does not depend on the thread count.
template <typename T>
LossAccuracy loss_and_accuracy(const Mlp<T>& model, const Dataset& data);

// Per-row cross-entropy given logits; log-sum-exp evaluated in double.
template <typename T>
double cross_entropy_row(std::span<const T> logits, int label);

// Checkpoint format: "RBSN", u32 version (1), u32 L, then per layer u32 rows,
// u32 cols, rows*cols f32 weights (row-major), rows f32 biases, and finally a
// u8 activation code. Everything little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const ModelWeights& model, std::ostream& out);
ModelWeights read_checkpoint(std::istream& in);
void save_checkpoint(const ModelWeights& model,
                     const std::filesystem::path& path);
ModelWeights load_checkpoint(const std::filesystem::path& path);

// Text format: line l holds the space-separated indices of hidden layer l.
std::string format_permutation_set(const PermutationSet& perms);
PermutationSet parse_permutation_set(const std::string& text);
void save_permutation_set(const PermutationSet& perms,
                          const std::filesystem::path& path);
PermutationSet load_permutation_set(const std::filesystem::path& path);

}  // namespace rebasin

#endif  // REBASIN_MODEL_HPP_
