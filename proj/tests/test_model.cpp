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

#include <omp.h>

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "rebasin/errors.hpp"
#include "rebasin/model.hpp"
#include "test_util.hpp"

namespace rebasin {
namespace {

using testing::random_matrix;
using testing::random_mlp;

// Straightforward per-sample forward pass in double.
std::vector<double> oracle_forward(const Mlp<float>& m,
                                   const std::vector<double>& x) {
  std::vector<double> z = x;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& w = m.layers[l].weight;
    std::vector<double> next(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = m.layers[l].bias[i];
      for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j) * z[j];
      const bool hidden = l + 1 < m.layers.size();
      next[i] = hidden && m.activation == Activation::kRelu ? std::max(s, 0.0) : s;
    }
    z = std::move(next);
  }
  return z;
}

PermutationSet random_perms(const Mlp<float>& m, std::uint64_t seed) {
  Rng rng(seed);
  const auto widths = m.hidden_widths();
  return random_permutation_set(widths, rng);
}

TEST(Mlp, ShapesAndValidation) {
  const std::vector<std::size_t> dims = {5, 7, 3, 2};
  auto m = Mlp<float>::zeros(dims);
  EXPECT_EQ(m.num_layers(), 3u);
  EXPECT_EQ(m.input_dim(), 5u);
  EXPECT_EQ(m.output_dim(), 2u);
  EXPECT_EQ(m.dims(), dims);
  EXPECT_EQ(m.hidden_widths(), (std::vector<std::size_t>{7, 3}));
  EXPECT_EQ(m.num_parameters(), 5u * 7 + 7 + 7 * 3 + 3 + 3 * 2 + 2);
  EXPECT_NO_THROW(m.validate());
  m.layers[1].bias[0] = std::nanf("");
  EXPECT_THROW(m.validate(), InvalidInput);
  m.layers[1].bias[0] = 0.0f;
  m.layers[1].weight = Matrix<float>(3, 6);
  EXPECT_THROW(m.validate(), InvalidInput);
}

TEST(Forward, MatchesOracle) {
  const auto m = random_mlp<float>({6, 9, 4, 3}, 1, 0.7);
  const auto x = random_matrix<float>(20, 6, 2);
  const auto batch = forward_batch(m, x);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const std::vector<double> xr(x.row(r).begin(), x.row(r).end());
    const auto expected = oracle_forward(m, xr);
    const auto single = forward<float>(m, x.row(r));
    for (std::size_t k = 0; k < expected.size(); ++k) {
      EXPECT_NEAR(batch(r, k), expected[k], 1e-5);
      EXPECT_NEAR(single[k], expected[k], 1e-5);
    }
  }
}

TEST(Forward, IdentityActivationIsLinear) {
  auto m = random_mlp<double>({3, 4, 2}, 3, 1.0, Activation::kIdentity);
  for (auto& layer : m.layers) std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  const std::vector<double> x = {0.3, -1.2, 2.0};
  std::vector<double> x2 = x;
  for (double& v : x2) v *= -2.5;
  const auto y = forward<double>(m, x);
  const auto y2 = forward<double>(m, x2);
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(y2[k], -2.5 * y[k], 1e-12);
}

TEST(Forward, HandBuiltQuadrantNetwork) {
  // -relu(-relu(-x1 + 1) + 1) - relu(relu(-x2)) at (-0.5, 0.5) is 0.
  ModelWeights m;
  m.layers = {{Matrix<float>(2, 2, {-1, 0, 0, -1}), {1, 0}},
              {Matrix<float>(2, 2, {-1, 0, 0, 1}), {1, 0}},
              {Matrix<float>(1, 2, {-1, -1}), {0}}};
  const std::vector<float> x = {-0.5f, 0.5f};
  EXPECT_EQ(forward<float>(m, x)[0], 0.0f);
  const std::vector<float> x2 = {0.25f, -0.5f};
  EXPECT_FLOAT_EQ(forward<float>(m, x2)[0], -0.75f);
}

TEST(Forward, RejectsWrongInputWidth) {
  const auto m = random_mlp<float>({3, 2, 1}, 1);
  EXPECT_THROW(forward_batch(m, Matrix<float>(2, 4)), InvalidInput);
  const std::vector<float> x(2);
  EXPECT_THROW(forward<float>(m, x), InvalidInput);
}

TEST(ApplyPermutation, IndexFormula) {
  const auto m = random_mlp<float>({4, 5, 6, 3}, 4);
  const auto p = random_perms(m, 5);
  const auto q = apply_permutation(m, p);
  for (std::size_t l = 0; l < 3; ++l) {
    const auto& w = m.layers[l].weight;
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const std::size_t pi = l < 2 ? p[l][i] : i;
      EXPECT_EQ(q.layers[l].bias[i], m.layers[l].bias[pi]);
      for (std::size_t j = 0; j < w.cols(); ++j) {
        const std::size_t pj = l > 0 ? p[l - 1][j] : j;
        EXPECT_EQ(q.layers[l].weight(i, j), w(pi, pj));
      }
    }
  }
}

TEST(ApplyPermutation, PreservesFunction) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = random_mlp<float>({8, 16, 12, 5}, seed, 0.5);
    const auto q = apply_permutation(m, random_perms(m, seed + 100));
    const auto x = random_matrix<float>(100, 8, seed + 200);
    const auto y1 = forward_batch(m, x);
    const auto y2 = forward_batch(q, x);
    for (std::size_t i = 0; i < y1.size(); ++i) {
      EXPECT_NEAR(y1.data()[i], y2.data()[i], 1e-5);
    }
  }
}

TEST(ApplyPermutation, PermutesHiddenActivations) {
  const auto m = random_mlp<float>({5, 7, 6, 2}, 8);
  const auto p = random_perms(m, 9);
  const auto x = random_matrix<float>(10, 5, 10);
  const auto h = hidden_activations(m, x);
  const auto hp = hidden_activations(apply_permutation(m, p), x);
  ASSERT_EQ(h.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t i = 0; i < h[l].cols(); ++i) {
        EXPECT_FLOAT_EQ(hp[l](r, i), h[l](r, p[l][i]));
      }
    }
  }
}

TEST(ApplyPermutation, InverseAndComposition) {
  const auto m = random_mlp<float>({3, 6, 6, 6, 2}, 11);
  const auto p1 = random_perms(m, 12);
  const auto p2 = random_perms(m, 13);
  EXPECT_EQ(apply_permutation(apply_permutation(m, p1), p1.inverse()), m);
  EXPECT_EQ(apply_permutation(apply_permutation(m, p1), p2),
            apply_permutation(m, compose(p1, p2)));
  EXPECT_EQ(apply_permutation(m, PermutationSet::identity_for(m)), m);
  EXPECT_TRUE(compose(p1, p1.inverse()).is_identity());
}

TEST(ApplyPermutation, RejectsMismatchedPerms) {
  const auto m = random_mlp<float>({3, 4, 2}, 1);
  PermutationSet wrong_count;
  EXPECT_THROW(apply_permutation(m, wrong_count), InvalidInput);
  PermutationSet wrong_size{{Permutation::identity(5)}};
  EXPECT_THROW(apply_permutation(m, wrong_size), InvalidInput);
}

TEST(Interpolate, EndpointsExactAndLinear) {
  const auto a = random_mlp<float>({4, 5, 3}, 1);
  const auto b = random_mlp<float>({4, 5, 3}, 2);
  EXPECT_EQ(interpolate(a, b, 0.0), a);
  EXPECT_EQ(interpolate(a, b, 1.0), b);
  const auto mid = interpolate(a, b, 0.25);
  const auto sa = a.parameter_spans();
  const auto sb = b.parameter_spans();
  const auto sm = mid.parameter_spans();
  for (std::size_t s = 0; s < sa.size(); ++s) {
    for (std::size_t i = 0; i < sa[s].size(); ++i) {
      EXPECT_NEAR(sm[s][i], 0.75 * sa[s][i] + 0.25 * sb[s][i], 1e-6);
    }
  }
  EXPECT_THROW(interpolate(a, b, -0.1), InvalidInput);
  EXPECT_THROW(interpolate(a, b, 1.5), InvalidInput);
  EXPECT_THROW(interpolate(a, random_mlp<float>({4, 6, 3}, 3), 0.5),
               InvalidInput);
}

TEST(Average, MeanOfModels) {
  const auto a = random_mlp<float>({3, 4, 2}, 1);
  const auto b = random_mlp<float>({3, 4, 2}, 2);
  const auto c = random_mlp<float>({3, 4, 2}, 3);
  const std::vector<ModelWeights> ms = {a, b, c};
  const auto avg = average<float>(ms);
  const auto s0 = a.parameter_spans();
  const auto s1 = b.parameter_spans();
  const auto s2 = c.parameter_spans();
  const auto sv = avg.parameter_spans();
  for (std::size_t s = 0; s < s0.size(); ++s) {
    for (std::size_t i = 0; i < s0[s].size(); ++i) {
      const double expected =
          (static_cast<double>(s0[s][i]) + s1[s][i] + s2[s][i]) / 3.0;
      EXPECT_NEAR(sv[s][i], expected, 1e-6);
    }
  }
  const std::vector<ModelWeights> same = {a, a, a, a, a};
  EXPECT_EQ(average<float>(same), a);
  EXPECT_THROW(average<float>(std::vector<ModelWeights>{}), InvalidInput);
}

TEST(InnerProduct, MatchesOracle) {
  const auto a = random_mlp<float>({3, 4, 2}, 1);
  const auto b = random_mlp<float>({3, 4, 2}, 2);
  double expected = 0.0;
  const auto sa = a.parameter_spans();
  const auto sb = b.parameter_spans();
  for (std::size_t s = 0; s < sa.size(); ++s) {
    for (std::size_t i = 0; i < sa[s].size(); ++i) {
      expected += static_cast<double>(sa[s][i]) * sb[s][i];
    }
  }
  EXPECT_NEAR(inner_product(a, b), expected, 1e-9);
}

TEST(Loss, CrossEntropyRow) {
  const std::vector<double> zero = {0.0, 0.0};
  EXPECT_NEAR(cross_entropy_row<double>(zero, 0), std::log(2.0), 1e-15);
  const std::vector<float> big = {1000.0f, 0.0f, -1000.0f};
  EXPECT_NEAR(cross_entropy_row<float>(big, 0), 0.0, 1e-12);
  EXPECT_NEAR(cross_entropy_row<float>(big, 1), 1000.0, 1e-9);
}

TEST(Loss, LossAndAccuracyMatchesOracle) {
  const auto m = random_mlp<float>({5, 8, 3}, 21, 0.6);
  Dataset d;
  d.features = random_matrix<float>(3000, 5, 22);
  d.num_classes = 3;
  Rng rng(23);
  for (std::size_t i = 0; i < 3000; ++i) {
    d.labels.push_back(static_cast<int>(uniform_index(rng, 3)));
  }
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < d.size(); ++r) {
    const std::vector<double> x(d.features.row(r).begin(),
                                d.features.row(r).end());
    const auto z = oracle_forward(m, x);
    const double mx = *std::max_element(z.begin(), z.end());
    double se = 0.0;
    for (const double v : z) se += std::exp(v - mx);
    loss += mx + std::log(se) - z[d.labels[r]];
    const auto pred = std::max_element(z.begin(), z.end()) - z.begin();
    if (pred == d.labels[r]) ++correct;
  }
  const auto la = loss_and_accuracy(m, d);
  EXPECT_NEAR(la.loss, loss / 3000.0, 1e-5);
  EXPECT_NEAR(la.accuracy, static_cast<double>(correct) / 3000.0, 1e-3);
}

TEST(Loss, IndependentOfThreadCount) {
  const auto m = random_mlp<float>({5, 8, 3}, 31, 0.6);
  Dataset d;
  d.features = random_matrix<float>(5000, 5, 32);
  d.num_classes = 3;
  for (std::size_t i = 0; i < 5000; ++i) d.labels.push_back(i % 3);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = loss_and_accuracy(m, d);
  omp_set_num_threads(4);
  const auto four = loss_and_accuracy(m, d);
  omp_set_num_threads(saved);
  EXPECT_EQ(one.loss, four.loss);
  EXPECT_EQ(one.accuracy, four.accuracy);
}

TEST(Checkpoint, RoundTripIsExact) {
  for (const auto act : {Activation::kRelu, Activation::kIdentity}) {
    const auto m = random_mlp<float>({7, 5, 4, 3}, 41, 1.0, act);
    std::stringstream buf;
    write_checkpoint(m, buf);
    EXPECT_EQ(read_checkpoint(buf), m);
  }
}

TEST(Checkpoint, ByteLayout) {
  ModelWeights m;
  m.layers = {{Matrix<float>(1, 2, {1.5f, -2.0f}), {0.25f}}};
  std::stringstream buf;
  write_checkpoint(m, buf);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 8 + 3 * 4 + 1);
  EXPECT_EQ(bytes.substr(0, 4), "RBSN");
  auto u32 = [&bytes](std::size_t off) {
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) {
      v = (v << 8) | static_cast<unsigned char>(bytes[off + k]);
    }
    return v;
  };
  EXPECT_EQ(u32(4), kCheckpointVersion);
  EXPECT_EQ(u32(8), 1u);
  EXPECT_EQ(u32(12), 1u);
  EXPECT_EQ(u32(16), 2u);
  float w0 = 0.0f;
  std::uint32_t raw = u32(20);
  std::memcpy(&w0, &raw, 4);
  EXPECT_EQ(w0, 1.5f);
  EXPECT_EQ(bytes.back(), '\0');
}

TEST(Checkpoint, CorruptInputs) {
  const auto m = random_mlp<float>({3, 4, 2}, 5);
  std::stringstream buf;
  write_checkpoint(m, buf);
  const std::string good = buf.str();

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::istringstream in1(bad_magic);
  try {
    read_checkpoint(in1);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }

  std::istringstream in2(good.substr(0, good.size() - 9));
  EXPECT_THROW(read_checkpoint(in2), ParseError);

  std::string bad_code = good;
  bad_code.back() = 7;
  std::istringstream in3(bad_code);
  try {
    read_checkpoint(in3);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), good.size() - 1);
  }

  std::string bad_version = good;
  bad_version[4] = 2;
  std::istringstream in4(bad_version);
  EXPECT_THROW(read_checkpoint(in4), ParseError);

  EXPECT_THROW(load_checkpoint("/nonexistent/model.rbsn"), InvalidInput);
}

TEST(Checkpoint, FileRoundTrip) {
  testing::TempDir dir("ckpt");
  const auto m = random_mlp<float>({3, 4, 2}, 6);
  save_checkpoint(m, dir / "m.rbsn");
  EXPECT_EQ(load_checkpoint(dir / "m.rbsn"), m);
}

TEST(PermutationFile, FormatAndParse) {
  const PermutationSet p{{Permutation(std::vector<int>{1, 0, 2}),
                          Permutation(std::vector<int>{0, 1})}};
  EXPECT_EQ(format_permutation_set(p), "1 0 2\n0 1\n");
  EXPECT_EQ(parse_permutation_set("1 0 2\n0 1\n"), p);
  EXPECT_EQ(parse_permutation_set("1 0 2\r\n\n0 1"), p);
  EXPECT_THROW(parse_permutation_set("1 1\n"), ParseError);
  EXPECT_THROW(parse_permutation_set("0 x\n"), ParseError);

  testing::TempDir dir("perm");
  save_permutation_set(p, dir / "p.txt");
  EXPECT_EQ(load_permutation_set(dir / "p.txt"), p);
}

}  // namespace
}  // namespace rebasin
