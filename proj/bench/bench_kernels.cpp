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

// Parallel kernels against the serial reference on shapes from MNIST MLP
// training and weight matching.

#include <benchmark/benchmark.h>

#include <vector>

#include "rebasin/kernels.hpp"
#include "rebasin/lap.hpp"
#include "rebasin/random.hpp"

namespace {

using rebasin::Matrix;
namespace k = rebasin::kernels;

Matrix<float> gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  rebasin::Rng rng(seed);
  Matrix<float> m(rows, cols);
  for (float& v : m.values()) v = static_cast<float>(rebasin::standard_normal(rng));
  return m;
}

// Batch x input times weight^T: one forward layer.
template <bool Parallel>
void BM_Affine(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  const auto x = gaussian(batch, in, 1);
  const auto w = gaussian(out, in, 2);
  const std::vector<float> bias(out, 0.1f);
  for (auto _ : state) {
    auto y = Parallel ? k::affine<float>(x, w, bias, true)
                      : k::reference::affine<float>(x, w, bias, true);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch * in * out));
}

// Profit matrix of one hidden layer: W^A (W^B)^T.
template <bool Parallel>
void BM_MatmulAbt(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto kdim = static_cast<std::size_t>(state.range(1));
  const auto a = gaussian(n, kdim, 3);
  const auto b = gaussian(n, kdim, 4);
  for (auto _ : state) {
    auto c = Parallel ? k::matmul_abt(a, b) : k::reference::matmul_abt(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * kdim));
}

// Weight gradient: delta^T X.
template <bool Parallel>
void BM_MatmulAtb(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = gaussian(batch, m, 5);
  const auto b = gaussian(batch, n, 6);
  for (auto _ : state) {
    auto c = Parallel ? k::matmul_atb(a, b) : k::reference::matmul_atb(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch * m * n));
}

void BM_SolveLap(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  rebasin::Rng rng(7);
  rebasin::ProfitMatrix profit(n, n);
  for (double& v : profit.values()) v = rebasin::standard_normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(rebasin::solve_lap(profit));
}

BENCHMARK(BM_Affine<true>)->Name("affine/parallel")->Args({64, 784, 256})->Args({1000, 512, 512});
BENCHMARK(BM_Affine<false>)->Name("affine/reference")->Args({64, 784, 256})->Args({1000, 512, 512});
BENCHMARK(BM_MatmulAbt<true>)->Name("matmul_abt/parallel")->Args({256, 784})->Args({512, 512});
BENCHMARK(BM_MatmulAbt<false>)->Name("matmul_abt/reference")->Args({256, 784})->Args({512, 512});
BENCHMARK(BM_MatmulAtb<true>)->Name("matmul_atb/parallel")->Args({64, 256, 784})->Args({512, 512, 512});
BENCHMARK(BM_MatmulAtb<false>)->Name("matmul_atb/reference")->Args({64, 256, 784})->Args({512, 512, 512});
BENCHMARK(BM_SolveLap)->Arg(64)->Arg(256)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
