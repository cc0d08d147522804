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

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>

#include "rebasin/counterexample.hpp"
#include "rebasin/errors.hpp"
#include "rebasin/eval.hpp"
#include "test_util.hpp"

namespace rebasin {
namespace {

double relu(double v) { return v > 0.0 ? v : 0.0; }

double f_a(double x1, double x2) { return -relu(-relu(-x1 + 1) + 1) - relu(relu(-x2)); }
double f_b(double x1, double x2) { return -relu(relu(x1)) - relu(-relu(x2 + 1) + 1); }

// Plain-double evaluation of a 2-2-2-1 ReLU net with independently written
// index arithmetic.
struct Net {
  std::array<double, 4> w1;
  std::array<double, 2> b1;
  std::array<double, 4> w2;
  std::array<double, 2> b2;
  std::array<double, 2> w3;
  double b3;

  double operator()(double x1, double x2) const {
    const double h0 = relu(w1[0] * x1 + w1[1] * x2 + b1[0]);
    const double h1 = relu(w1[2] * x1 + w1[3] * x2 + b1[1]);
    const double g0 = relu(w2[0] * h0 + w2[1] * h1 + b2[0]);
    const double g1 = relu(w2[2] * h0 + w2[3] * h1 + b2[1]);
    return w3[0] * g0 + w3[1] * g1 + b3;
  }
};

Net net_a() { return {{-1, 0, 0, -1}, {1, 0}, {-1, 0, 0, 1}, {1, 0}, {-1, -1}, 0}; }
Net net_b() { return {{1, 0, 0, 1}, {0, 1}, {1, 0, 0, -1}, {0, 1}, {-1, -1}, 0}; }

// Swaps hidden units of layer 0 and/or layer 1.
Net permuted(const Net& n, bool s0, bool s1) {
  auto p0 = [&](int i) { return s0 ? 1 - i : i; };
  auto p1 = [&](int i) { return s1 ? 1 - i : i; };
  Net out = n;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) out.w1[2 * i + j] = n.w1[2 * p0(i) + j];
    out.b1[i] = n.b1[p0(i)];
    for (int j = 0; j < 2; ++j) out.w2[2 * i + j] = n.w2[2 * p1(i) + p0(j)];
    out.b2[i] = n.b2[p1(i)];
    out.w3[i] = n.w3[p1(i)];
  }
  return out;
}

Net mix(const Net& a, const Net& b, double lam) {
  Net out = a;
  for (int i = 0; i < 4; ++i) out.w1[i] = (1 - lam) * a.w1[i] + lam * b.w1[i];
  for (int i = 0; i < 4; ++i) out.w2[i] = (1 - lam) * a.w2[i] + lam * b.w2[i];
  for (int i = 0; i < 2; ++i) {
    out.b1[i] = (1 - lam) * a.b1[i] + lam * b.b1[i];
    out.b2[i] = (1 - lam) * a.b2[i] + lam * b.b2[i];
    out.w3[i] = (1 - lam) * a.w3[i] + lam * b.w3[i];
  }
  out.b3 = (1 - lam) * a.b3 + lam * b.b3;
  return out;
}

double oracle_error(const Net& n, const Dataset& d) {
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < d.size(); ++r) {
    const int pred = n(d.features(r, 0), d.features(r, 1)) >= 0.0 ? 1 : 0;
    wrong += pred != d.labels[r] ? 1 : 0;
  }
  return static_cast<double>(wrong) / static_cast<double>(d.size());
}

TEST(Counterexample, WeightsRealizeClosedForms) {
  const auto pair = build_counterexample();
  EXPECT_EQ(pair.a.dims(), (std::vector<std::size_t>{2, 2, 2, 1}));
  EXPECT_EQ(pair.b.dims(), (std::vector<std::size_t>{2, 2, 2, 1}));
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) {
      const double x1 = -1.0 + 0.1 * i;
      const double x2 = -1.0 + 0.1 * j;
      const std::vector<float> x = {static_cast<float>(x1), static_cast<float>(x2)};
      const double ya = forward<float>(pair.a, x)[0];
      const double yb = forward<float>(pair.b, x)[0];
      EXPECT_NEAR(ya, f_a(x[0], x[1]), 1e-6);
      EXPECT_NEAR(yb, f_b(x[0], x[1]), 1e-6);
      EXPECT_NEAR(ya, -relu(x[0]) - relu(-x[1]), 1e-6);
      EXPECT_NEAR(ya, yb, 1e-6);
      EXPECT_NEAR(net_a()(x[0], x[1]), ya, 1e-6);
      EXPECT_NEAR(net_b()(x[0], x[1]), yb, 1e-6);
    }
  }
}

TEST(Counterexample, EndpointsClassifyPerfectly) {
  const auto pair = build_counterexample();
  const Dataset d = gen_quadrant_dataset(20000, 3);
  EXPECT_EQ(sign_error(pair.a, d), 0.0);
  EXPECT_EQ(sign_error(pair.b, d), 0.0);
  const auto pred = predict_sign(pair.a, d);
  EXPECT_EQ(pred, predict_sign(pair.b, d));
  for (std::size_t r = 0; r < d.size(); ++r) {
    EXPECT_EQ(pred[r], quadrant_label(d.features(r, 0), d.features(r, 1)));
  }
}

TEST(Counterexample, EveryPermutationHasInteriorBarrier) {
  const auto pair = build_counterexample();
  const Dataset d = gen_quadrant_dataset(100000, 1);
  const auto report = verify_no_lmc(pair, d, 25);
  ASSERT_EQ(report.curves.size(), 4u);
  EXPECT_TRUE(report.endpoints_perfect);
  EXPECT_TRUE(report.all_interior_barriers);
  EXPECT_EQ(report.error_a, 0.0);
  EXPECT_EQ(report.error_b, 0.0);
  EXPECT_GT(report.min_barrier, 0.05);

  const auto grid = lambda_grid(25);
  for (const auto& curve : report.curves) {
    const bool s0 = (curve.perm_id / 2) == 1;
    const bool s1 = (curve.perm_id % 2) == 1;
    EXPECT_EQ(curve.perms[0].is_identity(), !s0);
    EXPECT_EQ(curve.perms[1].is_identity(), !s1);
    ASSERT_EQ(curve.errors.size(), 25u);
    EXPECT_EQ(curve.errors.front(), 0.0);
    EXPECT_EQ(curve.errors.back(), 0.0);
    const Net b = permuted(net_b(), s0, s1);
    double oracle_max = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      EXPECT_EQ(curve.lambdas[k], grid[k]);
      const double expected = oracle_error(mix(net_a(), b, grid[k]), d);
      EXPECT_NEAR(curve.errors[k], expected, 2e-3)
          << "perm " << curve.perm_id << " lambda " << grid[k];
      if (k > 0 && k + 1 < grid.size()) oracle_max = std::max(oracle_max, expected);
    }
    EXPECT_GT(oracle_max, 0.0) << curve.perm_id;
    EXPECT_NEAR(curve.max_interior_error, oracle_max, 2e-3);
    EXPECT_GT(curve.max_interior_error, std::max(curve.errors.front(), curve.errors.back()));
    EXPECT_GT(curve.argmax_lambda, 0.0);
    EXPECT_LT(curve.argmax_lambda, 1.0);
  }
}

TEST(Counterexample, CsvLayout) {
  const auto pair = build_counterexample();
  const auto report = verify_no_lmc(pair, gen_quadrant_dataset(2000, 2), 5);
  std::istringstream in(counterexample_csv(report));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "perm_id,lambda,error");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 20u);
}

TEST(Counterexample, RejectsBadArguments) {
  const auto pair = build_counterexample();
  const Dataset d = gen_quadrant_dataset(100, 1);
  EXPECT_THROW(verify_no_lmc(pair, d, 2), InvalidInput);
  CounterexamplePair wide{testing::random_mlp<float>({2, 3, 2, 1}, 1),
                          testing::random_mlp<float>({2, 3, 2, 1}, 2)};
  EXPECT_THROW(verify_no_lmc(wide, d), InvalidInput);
  EXPECT_THROW(sign_error(pair.a, head(d, 0)), InvalidInput);
}

}  // namespace
}  // namespace rebasin
