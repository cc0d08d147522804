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

#include "rebasin/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rebasin/errors.hpp"
#include "rebasin/kernels.hpp"

namespace rebasin {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw InvalidInput("config key '" + key + "': bad number '" + value + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty() || value[0] == '-') {
    throw InvalidInput("config key '" + key + "': bad integer '" + value + "'");
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (widths.empty()) throw InvalidInput("config: at least one hidden layer");
  for (const auto w : widths) {
    if (w == 0) throw InvalidInput("config: hidden widths must be positive");
  }
  if (epochs == 0) throw InvalidInput("config: epochs must be positive");
  if (batch_size == 0) throw InvalidInput("config: batch_size must be positive");
  if (!(learning_rate > 0.0)) {
    throw InvalidInput("config: learning_rate must be positive");
  }
  if (momentum < 0.0 || momentum >= 1.0 || beta1 < 0.0 || beta1 >= 1.0 ||
      beta2 < 0.0 || beta2 >= 1.0) {
    throw InvalidInput("config: momentum and betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidInput("config: epsilon must be positive");
  if (weight_decay < 0.0) {
    throw InvalidInput("config: weight_decay must be non-negative");
  }
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig config;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput("config line " + std::to_string(line_no) +
                         ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "widths") {
      config.widths.clear();
      std::istringstream items(value);
      std::string item;
      while (std::getline(items, item, ',')) {
        config.widths.push_back(parse_uint(key, trim(item)));
      }
    } else if (key == "epochs") {
      config.epochs = parse_uint(key, value);
    } else if (key == "batch_size") {
      config.batch_size = parse_uint(key, value);
    } else if (key == "optimizer") {
      if (value == "adam") {
        config.optimizer = OptimizerKind::kAdam;
      } else if (value == "sgd-momentum") {
        config.optimizer = OptimizerKind::kSgdMomentum;
      } else {
        throw InvalidInput("config: unknown optimizer '" + value + "'");
      }
    } else if (key == "learning_rate") {
      config.learning_rate = parse_double(key, value);
    } else if (key == "momentum") {
      config.momentum = parse_double(key, value);
    } else if (key == "beta1") {
      config.beta1 = parse_double(key, value);
    } else if (key == "beta2") {
      config.beta2 = parse_double(key, value);
    } else if (key == "epsilon") {
      config.epsilon = parse_double(key, value);
    } else if (key == "weight_decay") {
      config.weight_decay = parse_double(key, value);
    } else if (key == "seed") {
      config.seed = parse_uint(key, value);
    } else {
      throw InvalidInput("config: unknown key '" + key + "'");
    }
  }
  config.validate();
  return config;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string TrainConfig::to_string() const {
  std::ostringstream out;
  out << "widths=";
  for (std::size_t i = 0; i < widths.size(); ++i) {
    out << (i ? "," : "") << widths[i];
  }
  out << "\nepochs=" << epochs << "\nbatch_size=" << batch_size
      << "\noptimizer="
      << (optimizer == OptimizerKind::kAdam ? "adam" : "sgd-momentum")
      << "\nlearning_rate=" << format_double(learning_rate)
      << "\nmomentum=" << format_double(momentum)
      << "\nbeta1=" << format_double(beta1)
      << "\nbeta2=" << format_double(beta2)
      << "\nepsilon=" << format_double(epsilon)
      << "\nweight_decay=" << format_double(weight_decay) << "\nseed=" << seed
      << "\n";
  return out.str();
}

TrainConfig TrainConfig::mnist_full() {
  TrainConfig config;
  config.widths = {512, 512, 512};
  config.epochs = 5;
  return config;
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

template <typename T>
Mlp<T> init_mlp(std::span<const std::size_t> dims, std::uint64_t seed) {
  Mlp<T> model = Mlp<T>::zeros(dims);
  Rng rng(seed);
  for (auto& layer : model.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    for (T& w : layer.weight.values()) {
      w = static_cast<T>(uniform(rng, -limit, limit));
    }
  }
  return model;
}

template <typename T>
LossGradient<T> loss_and_gradient(const Mlp<T>& model, const Matrix<T>& x,
                                  std::span<const int> labels) {
  if (x.rows() != labels.size() || x.rows() == 0) {
    throw InvalidInput("loss_and_gradient: batch rows and labels disagree");
  }
  if (x.cols() != model.input_dim()) {
    throw InvalidInput("loss_and_gradient: input dimension mismatch");
  }
  const std::size_t num_layers = model.layers.size();
  const bool relu = model.activation == Activation::kRelu;

  // inputs[l] is the input of layer l.
  std::vector<Matrix<T>> inputs;
  inputs.reserve(num_layers);
  inputs.push_back(x);
  for (std::size_t l = 0; l + 1 < num_layers; ++l) {
    inputs.push_back(kernels::affine<T>(inputs.back(), model.layers[l].weight,
                                        model.layers[l].bias, relu));
  }
  Matrix<T> delta = kernels::affine<T>(
      inputs.back(), model.layers.back().weight, model.layers.back().bias,
      false);

  const std::size_t batch = x.rows();
  const std::size_t classes = delta.cols();
  const T inv_batch = T{1} / static_cast<T>(batch);
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    auto z = delta.row(r);
    const auto label = static_cast<std::size_t>(labels[r]);
    if (label >= classes) {
      throw InvalidInput("loss_and_gradient: label out of range");
    }
    loss += cross_entropy_row<T>(z, labels[r]);
    const T max_z = *std::max_element(z.begin(), z.end());
    T sum = 0;
    for (T& v : z) {
      v = std::exp(v - max_z);
      sum += v;
    }
    for (std::size_t c = 0; c < classes; ++c) {
      z[c] = (z[c] / sum - (c == label ? T{1} : T{0})) * inv_batch;
    }
  }

  LossGradient<T> out;
  out.loss = loss / static_cast<double>(batch);
  out.grad.activation = model.activation;
  out.grad.layers.resize(num_layers);
  for (std::size_t l = num_layers; l-- > 0;) {
    auto& g = out.grad.layers[l];
    g.weight = kernels::matmul_atb(delta, inputs[l]);
    g.bias.assign(delta.cols(), T{0});
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      const auto row = delta.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) g.bias[c] += row[c];
    }
    if (l == 0) break;
    Matrix<T> upstream = kernels::matmul_ab(delta, model.layers[l].weight);
    if (relu) {
      // inputs[l] is post-ReLU, so a zero entry marks an inactive unit.
      const auto act = inputs[l].values();
      auto up = upstream.values();
      for (std::size_t i = 0; i < up.size(); ++i) {
        if (!(act[i] > T{0})) up[i] = T{0};
      }
    }
    delta = std::move(upstream);
  }
  return out;
}

BatchSampler::BatchSampler(std::size_t num_rows, std::size_t batch_size,
                           std::uint64_t seed)
    : num_rows_(num_rows), batch_size_(batch_size), rng_(seed) {
  if (num_rows == 0 || batch_size == 0) {
    throw InvalidInput("BatchSampler: empty dataset or zero batch size");
  }
  order_.resize(num_rows_);
  std::iota(order_.begin(), order_.end(), 0);
  shuffle(order_, rng_);
}

std::vector<std::size_t> BatchSampler::next() {
  if (cursor_ >= num_rows_) {
    cursor_ = 0;
    ++epoch_;
    std::iota(order_.begin(), order_.end(), 0);
    shuffle(order_, rng_);
  }
  const std::size_t end = std::min(num_rows_, cursor_ + batch_size_);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return out;
}

std::size_t BatchSampler::batches_per_epoch() const {
  return (num_rows_ + batch_size_ - 1) / batch_size_;
}

template <typename T>
Matrix<T> gather_rows(const Dataset& data, std::span<const std::size_t> rows) {
  Matrix<T> out(rows.size(), data.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = data.features.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

std::vector<int> gather_labels(const Dataset& data,
                               std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto r : rows) out.push_back(data.labels[r]);
  return out;
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerKind kind, double learning_rate,
                        double momentum, double beta1, double beta2,
                        double epsilon, double weight_decay)
    : kind_(kind),
      learning_rate_(learning_rate),
      momentum_(momentum),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon),
      weight_decay_(weight_decay) {}

template <typename T>
Optimizer<T> Optimizer<T>::from_config(const TrainConfig& config) {
  return Optimizer(config.optimizer, config.learning_rate, config.momentum,
                   config.beta1, config.beta2, config.epsilon,
                   config.weight_decay);
}

template <typename T>
Optimizer<T> Optimizer<T>::sgd_momentum(double learning_rate, double momentum) {
  return Optimizer(OptimizerKind::kSgdMomentum, learning_rate, momentum, 0.9,
                   0.999, 1e-8, 0.0);
}

template <typename T>
void Optimizer<T>::step(Mlp<T>& params, const Mlp<T>& grad) {
  if (steps_ == 0) {
    first_moment_ = Mlp<T>::zeros(params.dims(), params.activation);
    if (kind_ == OptimizerKind::kAdam) second_moment_ = first_moment_;
  }
  ++steps_;
  auto p = params.parameter_spans();
  const auto g = grad.parameter_spans();
  auto m = first_moment_.parameter_spans();
  const T lr = static_cast<T>(learning_rate_);
  const T wd = static_cast<T>(weight_decay_);
  if (kind_ == OptimizerKind::kSgdMomentum) {
    const T mu = static_cast<T>(momentum_);
    for (std::size_t s = 0; s < p.size(); ++s) {
      for (std::size_t i = 0; i < p[s].size(); ++i) {
        const T gi = g[s][i] + wd * p[s][i];
        m[s][i] = mu * m[s][i] + gi;
        p[s][i] -= lr * m[s][i];
      }
    }
    return;
  }
  auto v = second_moment_.parameter_spans();
  const T b1 = static_cast<T>(beta1_);
  const T b2 = static_cast<T>(beta2_);
  const T eps = static_cast<T>(epsilon_);
  const double t = static_cast<double>(steps_);
  const T correction1 = static_cast<T>(1.0 - std::pow(beta1_, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(beta2_, t));
  for (std::size_t s = 0; s < p.size(); ++s) {
    for (std::size_t i = 0; i < p[s].size(); ++i) {
      const T gi = g[s][i] + wd * p[s][i];
      m[s][i] = b1 * m[s][i] + (T{1} - b1) * gi;
      v[s][i] = b2 * v[s][i] + (T{1} - b2) * gi * gi;
      const T m_hat = m[s][i] / correction1;
      const T v_hat = v[s][i] / correction2;
      p[s][i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

ModelWeights train_mlp(const TrainConfig& config, const Dataset& data,
                       const TrainHooks& hooks) {
  config.validate();
  data.validate();
  if (data.size() == 0) throw InvalidInput("train_mlp: empty dataset");
  std::vector<std::size_t> dims = {data.dim()};
  dims.insert(dims.end(), config.widths.begin(), config.widths.end());
  dims.push_back(static_cast<std::size_t>(data.num_classes));

  ModelWeights model = init_mlp<float>(dims, derive_seed(config.seed, 0));
  BatchSampler sampler(data.size(), config.batch_size,
                       derive_seed(config.seed, 1));
  auto optimizer = Optimizer<float>::from_config(config);
  if (hooks.on_epoch) hooks.on_epoch(0, model);

  const std::size_t per_epoch = sampler.batches_per_epoch();
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const auto rows = sampler.next();
      const auto x = gather_rows<float>(data, rows);
      const auto y = gather_labels(data, rows);
      const auto lg = loss_and_gradient(model, x, y);
      if (!std::isfinite(lg.loss)) throw DivergenceError(step);
      if (hooks.on_step) hooks.on_step(step, lg.loss);
      optimizer.step(model, lg.grad);
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, model);
  }
  return model;
}

ActivationRecord record_activations(const ModelWeights& model,
                                    const Dataset& data,
                                    std::size_t max_rows) {
  if (data.dim() != model.input_dim()) {
    throw InvalidInput("record_activations: input dimension mismatch");
  }
  const std::size_t n = std::min(max_rows, data.size());
  ActivationRecord record;
  const auto widths = model.hidden_widths();
  for (const auto w : widths) record.layers.emplace_back(w, n);
  constexpr std::size_t kChunk = 1024;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(n, begin + kChunk);
    std::vector<std::size_t> rows(end - begin);
    std::iota(rows.begin(), rows.end(), begin);
    const auto acts = hidden_activations(model, gather_rows<float>(data, rows));
    for (std::size_t l = 0; l < acts.size(); ++l) {
      for (std::size_t r = 0; r < acts[l].rows(); ++r) {
        for (std::size_t u = 0; u < acts[l].cols(); ++u) {
          record.layers[l](u, begin + r) = acts[l](r, u);
        }
      }
    }
  }
  return record;
}

#define REBASIN_INSTANTIATE_TRAIN(T)                                          \
  template Mlp<T> init_mlp<T>(std::span<const std::size_t>, std::uint64_t);   \
  template LossGradient<T> loss_and_gradient(const Mlp<T>&, const Matrix<T>&, \
                                             std::span<const int>);           \
  template Matrix<T> gather_rows<T>(const Dataset&,                           \
                                    std::span<const std::size_t>);            \
  template class Optimizer<T>;

REBASIN_INSTANTIATE_TRAIN(float)
REBASIN_INSTANTIATE_TRAIN(double)

#undef REBASIN_INSTANTIATE_TRAIN

}  // namespace rebasin
