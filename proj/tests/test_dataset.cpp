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

#include <cmath>
#include <fstream>
#include <set>
#include <vector>

#include "rebasin/dataset.hpp"
#include "rebasin/errors.hpp"
#include "test_util.hpp"

namespace rebasin {
namespace {

using testing::TempDir;

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void write_bytes(const std::filesystem::path& p,
                 const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> image_file(std::uint32_t magic, std::uint32_t n,
                                      std::uint32_t rows, std::uint32_t cols,
                                      std::size_t payload) {
  std::vector<unsigned char> out;
  put_be32(out, magic);
  put_be32(out, n);
  put_be32(out, rows);
  put_be32(out, cols);
  for (std::size_t i = 0; i < payload; ++i) {
    out.push_back(static_cast<unsigned char>(i * 37 % 256));
  }
  return out;
}

std::vector<unsigned char> label_file(std::uint32_t magic,
                                      const std::vector<unsigned char>& labels,
                                      std::uint32_t n) {
  std::vector<unsigned char> out;
  put_be32(out, magic);
  put_be32(out, n);
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

TEST(LoadIdx, ParsesAndScalesPixels) {
  TempDir dir("idx");
  write_bytes(dir / "img", image_file(0x803, 3, 2, 2, 12));
  write_bytes(dir / "lbl", label_file(0x801, {4, 0, 9}, 3));
  const Dataset d = load_idx(dir / "img", dir / "lbl", Split::kTest);
  ASSERT_EQ(d.size(), 3u);
  ASSERT_EQ(d.dim(), 4u);
  EXPECT_EQ(d.labels, (std::vector<int>{4, 0, 9}));
  EXPECT_EQ(d.num_classes, 10);
  EXPECT_EQ(d.split, Split::kTest);
  for (std::size_t i = 0; i < 12; ++i) {
    const float expected = static_cast<float>(i * 37 % 256) / 255.0f;
    EXPECT_EQ(d.features(i / 4, i % 4), expected);
  }
}

TEST(LoadIdx, BadMagicNamesBothValues) {
  TempDir dir("idx");
  write_bytes(dir / "img", image_file(0x801, 1, 1, 1, 1));
  write_bytes(dir / "lbl", label_file(0x801, {1}, 1));
  try {
    load_idx(dir / "img", dir / "lbl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("0x00000803"), std::string::npos) << what;
    EXPECT_NE(what.find("0x00000801"), std::string::npos) << what;
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(LoadIdx, TruncatedPayloadReportsOffset) {
  TempDir dir("idx");
  write_bytes(dir / "img", image_file(0x803, 2, 2, 2, 5));
  write_bytes(dir / "lbl", label_file(0x801, {1, 2}, 2));
  try {
    load_idx(dir / "img", dir / "lbl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 16u + 5u);
  }
}

TEST(LoadIdx, TruncatedHeaderAndLabelMismatch) {
  TempDir dir("idx");
  write_bytes(dir / "short", {0, 0, 8});
  write_bytes(dir / "img", image_file(0x803, 2, 1, 1, 2));
  write_bytes(dir / "lbl", label_file(0x801, {1, 2, 3}, 3));
  write_bytes(dir / "lbl_short", label_file(0x801, {1}, 2));
  EXPECT_THROW(load_idx(dir / "short", dir / "lbl"), ParseError);
  EXPECT_THROW(load_idx(dir / "img", dir / "lbl"), ParseError);
  EXPECT_THROW(load_idx(dir / "img", dir / "lbl_short"), ParseError);
  EXPECT_THROW(load_idx(dir / "missing", dir / "lbl"), InvalidInput);
}

TEST(LoadMnist, MissingDirectoryNamesPath) {
  try {
    load_mnist("/nonexistent/mnist_dir", Split::kTrain);
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/mnist_dir"),
              std::string::npos);
  }
}

TEST(LoadMnist, RealFiles) {
  REBASIN_REQUIRE_MNIST();
  const Dataset train = load_mnist(testing::mnist_dir(), Split::kTrain);
  const Dataset test = load_mnist(testing::mnist_dir(), Split::kTest);
  EXPECT_EQ(train.size(), 60000u);
  EXPECT_EQ(test.size(), 10000u);
  EXPECT_EQ(train.dim(), 784u);
  EXPECT_EQ(train.labels[0], 5);
  EXPECT_EQ(test.labels[0], 7);
  EXPECT_NO_THROW(train.validate());
  std::set<int> classes(test.labels.begin(), test.labels.end());
  EXPECT_EQ(classes.size(), 10u);
  for (const float v : train.features.values()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Quadrant, LabelsFollowTheRule) {
  const Dataset d = gen_quadrant_dataset(20000, 3);
  ASSERT_EQ(d.size(), 20000u);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const float x1 = d.features(i, 0);
    const float x2 = d.features(i, 1);
    ASSERT_GE(x1, -1.0f);
    ASSERT_LT(x1, 1.0f);
    EXPECT_EQ(d.labels[i], (x1 < 0 && x2 > 0) ? 1 : 0);
    positives += d.labels[i];
  }
  // One quadrant out of four.
  EXPECT_NEAR(static_cast<double>(positives) / 20000.0, 0.25, 0.015);
  EXPECT_EQ(quadrant_label(-0.5f, 0.5f), 1);
  EXPECT_EQ(quadrant_label(0.0f, 0.5f), 0);
  EXPECT_EQ(quadrant_label(-0.5f, 0.0f), 0);
}

TEST(Quadrant, Deterministic) {
  EXPECT_EQ(gen_quadrant_dataset(100, 1).features,
            gen_quadrant_dataset(100, 1).features);
  EXPECT_NE(gen_quadrant_dataset(100, 1).features,
            gen_quadrant_dataset(100, 2).features);
  EXPECT_THROW(gen_quadrant_dataset(0, 1), InvalidInput);
}

TEST(Blobs, BalancedAndSeparated) {
  const Dataset d = gen_blobs_dataset(4000, 4, 8, 6.0, 5);
  ASSERT_EQ(d.dim(), 8u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.labels[i], static_cast<int>(i % 4));
  }
  // Class means should sit near radius 6 (noise adds ~1/sqrt(1000)).
  for (int c = 0; c < 4; ++c) {
    std::vector<double> mean(8, 0.0);
    for (std::size_t i = c; i < d.size(); i += 4) {
      for (std::size_t k = 0; k < 8; ++k) mean[k] += d.features(i, k) / 1000.0;
    }
    double norm = 0.0;
    for (const double m : mean) norm += m * m;
    EXPECT_NEAR(std::sqrt(norm), 6.0, 0.3);
  }
  EXPECT_EQ(d.features, gen_blobs_dataset(4000, 4, 8, 6.0, 5).features);
  EXPECT_THROW(gen_blobs_dataset(10, 1, 2, 1.0, 0), InvalidInput);
}

TEST(Rows, SelectHeadSliceAndFraction) {
  const Dataset d = gen_quadrant_dataset(50, 9);
  const std::vector<std::size_t> idx = {4, 1, 4};
  const Dataset s = select_rows(d, idx);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.labels[0], d.labels[4]);
  EXPECT_EQ(s.features(1, 1), d.features(1, 1));
  EXPECT_EQ(head(d, 10).size(), 10u);
  EXPECT_EQ(head(d, 500).size(), 50u);
  const Dataset mid = slice(d, 20, 30);
  EXPECT_EQ(mid.features(0, 0), d.features(20, 0));
  EXPECT_THROW(slice(d, 30, 20), InvalidInput);
  EXPECT_THROW(select_rows(d, std::vector<std::size_t>{50}), InvalidInput);

  const Dataset half = random_fraction(d, 0.5, 1);
  EXPECT_EQ(half.size(), 25u);
  EXPECT_EQ(half.features, random_fraction(d, 0.5, 1).features);
  EXPECT_NE(half.features, random_fraction(d, 0.5, 2).features);
  EXPECT_THROW(random_fraction(d, 0.0, 1), InvalidInput);
}

TEST(Rows, ValidateCatchesBadLabels) {
  Dataset d = gen_quadrant_dataset(5, 1);
  EXPECT_NO_THROW(d.validate());
  d.labels[2] = 7;
  EXPECT_THROW(d.validate(), InvalidInput);
  d.labels.pop_back();
  EXPECT_THROW(d.validate(), InvalidInput);
}

TEST(BiasedSplit, CountsFollowFloorRule) {
  const Dataset d = gen_blobs_dataset(1000, 10, 2, 3.0, 2);
  const auto [a, b] = split_dataset_biased(d, 5, 0.8);
  EXPECT_EQ(a.size() + b.size(), d.size());
  std::vector<int> count_a(10, 0);
  for (const int y : a.labels) ++count_a[y];
  // 100 rows per class: floor(100 f) go to A.
  for (int c = 0; c < 10; ++c) {
    EXPECT_EQ(count_a[c], c < 5 ? 80 : 20) << c;
  }
  EXPECT_THROW(split_dataset_biased(d, 5, 1.0), InvalidInput);
}

}  // namespace
}  // namespace rebasin
