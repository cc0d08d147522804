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

#include "rebasin/counterexample.hpp"

#include <algorithm>
#include <sstream>

#include "rebasin/errors.hpp"
#include "rebasin/eval.hpp"

namespace rebasin {
namespace {

DenseLayer<float> dense(std::size_t rows, std::size_t cols,
                        std::vector<float> weight, std::vector<float> bias) {
  return {Matrix<float>(rows, cols, std::move(weight)), std::move(bias)};
}

const Permutation& pick(bool swap) {
  static const Permutation kIdentity = Permutation::identity(2);
  static const Permutation kSwap(std::vector<int>{1, 0});
  return swap ? kSwap : kIdentity;
}

}  // namespace

CounterexamplePair build_counterexample() {
  CounterexamplePair pair;
  pair.a.activation = Activation::kRelu;
  pair.a.layers = {dense(2, 2, {-1, 0, 0, -1}, {1, 0}),
                   dense(2, 2, {-1, 0, 0, 1}, {1, 0}),
                   dense(1, 2, {-1, -1}, {0})};
  pair.b.activation = Activation::kRelu;
  pair.b.layers = {dense(2, 2, {1, 0, 0, 1}, {0, 1}),
                   dense(2, 2, {1, 0, 0, -1}, {0, 1}),
                   dense(1, 2, {-1, -1}, {0})};
  return pair;
}

std::vector<int> predict_sign(const ModelWeights& model, const Dataset& data) {
  if (model.output_dim() != 1) {
    throw InvalidInput("predict_sign: model must have a single output");
  }
  const Matrix<float> out = forward_batch(model, data.features);
  std::vector<int> labels(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    labels[r] = out(r, 0) >= 0.0f ? 1 : 0;
  }
  return labels;
}

double sign_error(const ModelWeights& model, const Dataset& data) {
  if (data.size() == 0) throw InvalidInput("sign_error: empty dataset");
  const auto pred = predict_sign(model, data);
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < pred.size(); ++r) {
    if (pred[r] != data.labels[r]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

NoLmcReport verify_no_lmc(const CounterexamplePair& pair, const Dataset& data,
                          std::size_t num_lambdas) {
  if (num_lambdas < 3) {
    throw InvalidInput("verify_no_lmc: need at least one interior lambda");
  }
  check_same_shape(pair.a, pair.b, "verify_no_lmc");
  if (pair.a.hidden_widths() != std::vector<std::size_t>{2, 2}) {
    throw InvalidInput("verify_no_lmc: expected two hidden layers of width 2");
  }

  NoLmcReport report;
  report.error_a = sign_error(pair.a, data);
  report.error_b = sign_error(pair.b, data);
  report.endpoints_perfect = report.error_a == 0.0 && report.error_b == 0.0;
  report.all_interior_barriers = true;

  const auto lambdas = lambda_grid(num_lambdas);
  for (std::size_t id = 0; id < 4; ++id) {
    PermutationCurve curve;
    curve.perm_id = id;
    curve.perms.perms = {pick(id & 2), pick(id & 1)};
    curve.lambdas = lambdas;
    const ModelWeights b = apply_permutation(pair.b, curve.perms);
    for (const double lambda : lambdas) {
      curve.errors.push_back(sign_error(interpolate(pair.a, b, lambda), data));
    }
    const double e0 = curve.errors.front();
    const double e1 = curve.errors.back();
    std::size_t best = 1;
    for (std::size_t k = 2; k + 1 < curve.errors.size(); ++k) {
      if (curve.errors[k] > curve.errors[best]) best = k;
    }
    curve.max_interior_error = curve.errors[best];
    curve.argmax_lambda = lambdas[best];
    curve.barrier = barrier_from_values(curve.lambdas, curve.errors).barrier;
    if (!(curve.max_interior_error > std::max(e0, e1))) {
      report.all_interior_barriers = false;
    }
    report.curves.push_back(std::move(curve));
  }
  report.min_barrier = report.curves.front().barrier;
  for (const auto& c : report.curves) {
    report.min_barrier = std::min(report.min_barrier, c.barrier);
  }
  return report;
}

std::string counterexample_csv(const NoLmcReport& report) {
  std::ostringstream out;
  out << "perm_id,lambda,error\n";
  for (const auto& c : report.curves) {
    for (std::size_t k = 0; k < c.lambdas.size(); ++k) {
      out << c.perm_id << ',' << format_number(c.lambdas[k]) << ','
          << format_number(c.errors[k]) << '\n';
    }
  }
  return out.str();
}

}  // namespace rebasin
