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

#include "rebasin/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "rebasin/errors.hpp"
#include "rebasin/kernels.hpp"

namespace rebasin {
namespace {

constexpr std::size_t kEvalChunkRows = 1024;

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::string out = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(dims[i]);
  }
  return out + ")";
}

}  // namespace

template <typename T>
Mlp<T> Mlp<T>::zeros(std::span<const std::size_t> dims, Activation act) {
  if (dims.size() < 2) throw InvalidInput("an MLP needs at least two dims");
  Mlp<T> out;
  out.activation = act;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    out.layers.push_back(
        {Matrix<T>(dims[l + 1], dims[l]), std::vector<T>(dims[l + 1], T{0})});
  }
  return out;
}

template <typename T>
std::vector<std::size_t> Mlp<T>::dims() const {
  std::vector<std::size_t> out;
  if (layers.empty()) return out;
  out.push_back(layers.front().weight.cols());
  for (const auto& layer : layers) out.push_back(layer.weight.rows());
  return out;
}

template <typename T>
std::vector<std::size_t> Mlp<T>::hidden_widths() const {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    out.push_back(layers[l].weight.rows());
  }
  return out;
}

template <typename T>
std::size_t Mlp<T>::num_parameters() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

template <typename T>
void Mlp<T>::validate() const {
  if (layers.empty()) throw InvalidInput("model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw InvalidInput("layer " + std::to_string(l) +
                         ": bias length does not match weight rows");
    }
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows()) {
      throw InvalidInput("layer " + std::to_string(l) +
                         ": input width does not match previous layer");
    }
    if (!layer.weight.all_finite()) {
      throw InvalidInput("layer " + std::to_string(l) +
                         ": non-finite weight");
    }
    for (const T v : layer.bias) {
      if (!std::isfinite(v)) {
        throw InvalidInput("layer " + std::to_string(l) +
                           ": non-finite bias");
      }
    }
  }
}

template <typename T>
std::vector<std::span<T>> Mlp<T>::parameter_spans() {
  std::vector<std::span<T>> out;
  for (auto& layer : layers) {
    out.push_back(layer.weight.values());
    out.push_back(layer.bias);
  }
  return out;
}

template <typename T>
std::vector<std::span<const T>> Mlp<T>::parameter_spans() const {
  std::vector<std::span<const T>> out;
  for (const auto& layer : layers) {
    out.push_back(layer.weight.values());
    out.push_back(layer.bias);
  }
  return out;
}

PermutationSet PermutationSet::identity(std::span<const std::size_t> widths) {
  PermutationSet out;
  for (const std::size_t w : widths) out.perms.push_back(Permutation::identity(w));
  return out;
}

PermutationSet PermutationSet::inverse() const {
  PermutationSet out;
  for (const auto& p : perms) out.perms.push_back(p.inverse());
  return out;
}

bool PermutationSet::is_identity() const {
  return std::all_of(perms.begin(), perms.end(),
                     [](const Permutation& p) { return p.is_identity(); });
}

PermutationSet compose(const PermutationSet& first,
                       const PermutationSet& second) {
  if (first.size() != second.size()) {
    throw InvalidInput("compose: permutation sets have different layer counts");
  }
  PermutationSet out;
  for (std::size_t l = 0; l < first.size(); ++l) {
    out.perms.push_back(compose(first[l], second[l]));
  }
  return out;
}

PermutationSet random_permutation_set(std::span<const std::size_t> widths,
                                      std::mt19937_64& rng) {
  PermutationSet out;
  for (const std::size_t w : widths) out.perms.push_back(Permutation::random(w, rng));
  return out;
}

template <typename T>
void check_same_shape(const Mlp<T>& a, const Mlp<T>& b, const char* context) {
  const auto da = a.dims();
  const auto db = b.dims();
  if (da != db) {
    throw InvalidInput(std::string(context) + ": model shapes differ " +
                       shape_string(da) + " vs " + shape_string(db));
  }
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].bias.size() != b.layers[l].bias.size()) {
      throw InvalidInput(std::string(context) + ": bias shapes differ");
    }
  }
}

template <typename T>
std::vector<T> forward(const Mlp<T>& model, std::span<const T> x) {
  if (model.layers.empty() || x.size() != model.input_dim()) {
    throw InvalidInput("forward: input has dimension " +
                       std::to_string(x.size()) + ", model expects " +
                       (model.layers.empty()
                            ? std::string("none")
                            : std::to_string(model.input_dim())));
  }
  std::vector<T> z(x.begin(), x.end());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const bool hidden = l + 1 < model.layers.size();
    std::vector<T> next(layer.weight.rows());
    for (std::size_t i = 0; i < next.size(); ++i) {
      T s = 0;
      const auto row = layer.weight.row(i);
      for (std::size_t j = 0; j < z.size(); ++j) s += row[j] * z[j];
      s += layer.bias[i];
      if (hidden && model.activation == Activation::kRelu) s = std::max(s, T{0});
      next[i] = s;
    }
    z = std::move(next);
  }
  return z;
}

template <typename T>
Matrix<T> forward_batch(const Mlp<T>& model, const Matrix<T>& x) {
  if (model.layers.empty() || x.cols() != model.input_dim()) {
    throw InvalidInput("forward_batch: input has " + std::to_string(x.cols()) +
                       " columns, model expects " +
                       (model.layers.empty()
                            ? std::string("none")
                            : std::to_string(model.input_dim())));
  }
  Matrix<T> z = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const bool hidden = l + 1 < model.layers.size();
    const bool relu = hidden && model.activation == Activation::kRelu;
    z = kernels::affine<T>(z, model.layers[l].weight, model.layers[l].bias,
                           relu);
  }
  return z;
}

template <typename T>
std::vector<Matrix<T>> hidden_activations(const Mlp<T>& model,
                                          const Matrix<T>& x) {
  if (model.layers.empty() || x.cols() != model.input_dim()) {
    throw InvalidInput("hidden_activations: input dimension mismatch");
  }
  std::vector<Matrix<T>> out;
  out.reserve(model.layers.size() - 1);
  const Matrix<T>* z = &x;
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    out.push_back(kernels::affine<T>(*z, model.layers[l].weight,
                                     model.layers[l].bias,
                                     model.activation == Activation::kRelu));
    z = &out.back();
  }
  return out;
}

template <typename T>
Mlp<T> apply_permutation(const Mlp<T>& model, const PermutationSet& perms) {
  const auto widths = model.hidden_widths();
  if (perms.size() != widths.size()) {
    throw InvalidInput("apply_permutation: " + std::to_string(perms.size()) +
                       " permutations for " + std::to_string(widths.size()) +
                       " hidden layers");
  }
  for (std::size_t l = 0; l < widths.size(); ++l) {
    if (perms[l].size() != widths[l]) {
      throw InvalidInput("apply_permutation: permutation " +
                         std::to_string(l) + " has size " +
                         std::to_string(perms[l].size()) + ", layer width is " +
                         std::to_string(widths[l]));
    }
  }
  Mlp<T> out;
  out.activation = model.activation;
  const std::size_t num_layers = model.layers.size();
  for (std::size_t l = 0; l < num_layers; ++l) {
    const auto& src = model.layers[l];
    const Permutation* row_perm = l + 1 < num_layers ? &perms[l] : nullptr;
    const Permutation* col_perm = l > 0 ? &perms[l - 1] : nullptr;
    DenseLayer<T> dst{Matrix<T>(src.weight.rows(), src.weight.cols()),
                      std::vector<T>(src.bias.size())};
    for (std::size_t i = 0; i < src.weight.rows(); ++i) {
      const std::size_t si = row_perm ? static_cast<std::size_t>((*row_perm)[i]) : i;
      const auto src_row = src.weight.row(si);
      auto dst_row = dst.weight.row(i);
      if (col_perm) {
        for (std::size_t j = 0; j < dst_row.size(); ++j) {
          dst_row[j] = src_row[static_cast<std::size_t>((*col_perm)[j])];
        }
      } else {
        std::copy(src_row.begin(), src_row.end(), dst_row.begin());
      }
      dst.bias[i] = src.bias[si];
    }
    out.layers.push_back(std::move(dst));
  }
  return out;
}

template <typename T>
Mlp<T> interpolate(const Mlp<T>& a, const Mlp<T>& b, double lambda) {
  check_same_shape(a, b, "interpolate");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw InvalidInput("interpolate: lambda must lie in [0, 1], got " +
                       std::to_string(lambda));
  }
  if (lambda == 0.0) return a;
  if (lambda == 1.0) return b;
  Mlp<T> out = a;
  const T wa = static_cast<T>(1.0 - lambda);
  const T wb = static_cast<T>(lambda);
  auto dst = out.parameter_spans();
  const auto sa = a.parameter_spans();
  const auto sb = b.parameter_spans();
  for (std::size_t s = 0; s < dst.size(); ++s) {
    for (std::size_t i = 0; i < dst[s].size(); ++i) {
      dst[s][i] = wa * sa[s][i] + wb * sb[s][i];
    }
  }
  return out;
}

template <typename T>
Mlp<T> average(std::span<const Mlp<T>> models) {
  if (models.empty()) throw InvalidInput("average: no models");
  for (const auto& m : models) check_same_shape(models[0], m, "average");
  Mlp<T> out = models[0];
  auto dst = out.parameter_spans();
  std::vector<std::vector<std::span<const T>>> src;
  for (const auto& m : models) src.push_back(m.parameter_spans());
  const double count = static_cast<double>(models.size());
  for (std::size_t s = 0; s < dst.size(); ++s) {
    for (std::size_t i = 0; i < dst[s].size(); ++i) {
      double acc = 0.0;
      for (const auto& spans : src) acc += static_cast<double>(spans[s][i]);
      dst[s][i] = static_cast<T>(acc / count);
    }
  }
  return out;
}

template <typename T>
double inner_product(const Mlp<T>& a, const Mlp<T>& b) {
  check_same_shape(a, b, "inner_product");
  const auto sa = a.parameter_spans();
  const auto sb = b.parameter_spans();
  double total = 0.0;
  for (std::size_t s = 0; s < sa.size(); ++s) {
    for (std::size_t i = 0; i < sa[s].size(); ++i) {
      total += static_cast<double>(sa[s][i]) * static_cast<double>(sb[s][i]);
    }
  }
  return total;
}

template <typename T>
double cross_entropy_row(std::span<const T> logits, int label) {
  double max_logit = static_cast<double>(logits[0]);
  for (const T v : logits) max_logit = std::max(max_logit, static_cast<double>(v));
  double sum = 0.0;
  for (const T v : logits) sum += std::exp(static_cast<double>(v) - max_logit);
  return std::log(sum) + max_logit -
         static_cast<double>(logits[static_cast<std::size_t>(label)]);
}

template <typename T>
LossAccuracy loss_and_accuracy(const Mlp<T>& model, const Dataset& data) {
  if (data.size() == 0) throw InvalidInput("loss_and_accuracy: empty dataset");
  if (static_cast<std::size_t>(data.num_classes) != model.output_dim()) {
    throw InvalidInput("loss_and_accuracy: dataset has " +
                       std::to_string(data.num_classes) +
                       " classes, model outputs " +
                       std::to_string(model.output_dim()));
  }
  const std::size_t n = data.size();
  std::vector<double> row_loss(n);
  std::vector<char> row_correct(n);
  for (std::size_t begin = 0; begin < n; begin += kEvalChunkRows) {
    const std::size_t end = std::min(n, begin + kEvalChunkRows);
    Matrix<T> x(end - begin, data.dim());
    for (std::size_t r = begin; r < end; ++r) {
      const auto src = data.features.row(r);
      std::copy(src.begin(), src.end(), x.row(r - begin).begin());
    }
    const Matrix<T> logits = forward_batch(model, x);
    for (std::size_t r = begin; r < end; ++r) {
      const auto z = logits.row(r - begin);
      const int label = data.labels[r];
      row_loss[r] = cross_entropy_row<T>(z, label);
      const auto best = std::max_element(z.begin(), z.end()) - z.begin();
      row_correct[r] = best == label;
    }
  }
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) {
    loss += row_loss[r];
    correct += row_correct[r] ? 1 : 0;
  }
  return {loss / static_cast<double>(n),
          static_cast<double>(correct) / static_cast<double>(n)};
}

#define REBASIN_INSTANTIATE_MODEL(T)                                          \
  template struct Mlp<T>;                                                     \
  template void check_same_shape(const Mlp<T>&, const Mlp<T>&, const char*);  \
  template std::vector<T> forward(const Mlp<T>&, std::span<const T>);         \
  template Matrix<T> forward_batch(const Mlp<T>&, const Matrix<T>&);          \
  template std::vector<Matrix<T>> hidden_activations(const Mlp<T>&,           \
                                                     const Matrix<T>&);       \
  template Mlp<T> apply_permutation(const Mlp<T>&, const PermutationSet&);    \
  template Mlp<T> interpolate(const Mlp<T>&, const Mlp<T>&, double);          \
  template Mlp<T> average(std::span<const Mlp<T>>);                           \
  template double inner_product(const Mlp<T>&, const Mlp<T>&);                \
  template double cross_entropy_row(std::span<const T>, int);                 \
  template LossAccuracy loss_and_accuracy(const Mlp<T>&, const Dataset&);

REBASIN_INSTANTIATE_MODEL(float)
REBASIN_INSTANTIATE_MODEL(double)

#undef REBASIN_INSTANTIATE_MODEL

}  // namespace rebasin
