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

#include "rebasin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>

#include "rebasin/errors.hpp"
#include "rebasin/random.hpp"

namespace rebasin {
namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

std::uint32_t be32(const std::vector<unsigned char>& bytes,
                   std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw ParseError(path.string() + ": truncated IDX header", bytes.size());
  }
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void expect_magic(std::uint32_t found, std::uint32_t expected,
                  const std::filesystem::path& path) {
  if (found != expected) {
    throw ParseError(path.string() + ": bad IDX magic, expected " +
                         hex32(expected) + " but found " + hex32(found),
                     0);
  }
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() != labels.size()) {
    throw InvalidInput("dataset has " + std::to_string(features.rows()) +
                       " feature rows but " + std::to_string(labels.size()) +
                       " labels");
  }
  for (const int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw InvalidInput("label " + std::to_string(y) + " outside [0, " +
                         std::to_string(num_classes) + ")");
    }
  }
}

Dataset select_rows(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.split = data.split;
  out.features = Matrix<float>(indices.size(), data.dim());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= data.size()) throw InvalidInput("select_rows: index out of range");
    const auto row = data.features.row(src);
    std::copy(row.begin(), row.end(), out.features.row(r).begin());
    out.labels.push_back(data.labels[src]);
  }
  return out;
}

Dataset head(const Dataset& data, std::size_t n) {
  return slice(data, 0, std::min(n, data.size()));
}

Dataset slice(const Dataset& data, std::size_t begin, std::size_t end) {
  if (begin > end || end > data.size()) {
    throw InvalidInput("slice: bad row range");
  }
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return select_rows(data, idx);
}

Dataset random_fraction(const Dataset& data, double frac, std::uint64_t seed) {
  if (!(frac > 0.0 && frac <= 1.0)) {
    throw InvalidInput("random_fraction: frac must lie in (0, 1]");
  }
  const auto keep = static_cast<std::size_t>(
      std::llround(frac * static_cast<double>(data.size())));
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < keep; ++i) {
    std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return select_rows(data, idx);
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, Split split) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  expect_magic(be32(images, 0, images_path), kIdxImageMagic, images_path);
  const std::uint32_t n = be32(images, 4, images_path);
  const std::uint32_t rows = be32(images, 8, images_path);
  const std::uint32_t cols = be32(images, 12, images_path);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  const std::size_t image_bytes = 16 + static_cast<std::size_t>(n) * pixels;
  if (images.size() < image_bytes) {
    throw ParseError(images_path.string() + ": truncated image data, expected " +
                         std::to_string(image_bytes) + " bytes",
                     images.size());
  }

  expect_magic(be32(labels, 0, labels_path), kIdxLabelMagic, labels_path);
  const std::uint32_t n_labels = be32(labels, 4, labels_path);
  if (n_labels != n) {
    throw ParseError(labels_path.string() + ": " + std::to_string(n_labels) +
                         " labels for " + std::to_string(n) + " images",
                     4);
  }
  if (labels.size() < 8 + static_cast<std::size_t>(n)) {
    throw ParseError(labels_path.string() + ": truncated label data",
                     labels.size());
  }

  Dataset out;
  out.split = split;
  out.features = Matrix<float>(n, pixels);
  out.labels.resize(n);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.features.row(i);
    const unsigned char* src = images.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) {
      row[p] = static_cast<float>(src[p]) / 255.0f;
    }
    out.labels[i] = labels[8 + i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = std::max(10, max_label + 1);
  return out;
}

Dataset load_mnist(const std::filesystem::path& dir, Split split) {
  const bool train = split == Split::kTrain;
  const auto images =
      dir / (train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte");
  const auto labels =
      dir / (train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte");
  for (const auto& p : {images, labels}) {
    if (!std::filesystem::exists(p)) {
      throw InvalidInput("MNIST file not found: " + p.string());
    }
  }
  return load_idx(images, labels, split);
}

std::filesystem::path default_data_dir() {
  const char* env = std::getenv("REBASIN_DATA_DIR");
  return env ? std::filesystem::path(env) : std::filesystem::path();
}

int quadrant_label(float x1, float x2) { return (x1 < 0.0f && x2 > 0.0f) ? 1 : 0; }

Dataset gen_quadrant_dataset(std::size_t n, std::uint64_t seed, Split split) {
  if (n == 0) throw InvalidInput("gen_quadrant_dataset: n must be positive");
  Rng rng(seed);
  Dataset out;
  out.split = split;
  out.num_classes = 2;
  out.features = Matrix<float>(n, 2);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x1 = static_cast<float>(uniform(rng, -1.0, 1.0));
    const auto x2 = static_cast<float>(uniform(rng, -1.0, 1.0));
    out.features(i, 0) = x1;
    out.features(i, 1) = x2;
    out.labels[i] = quadrant_label(x1, x2);
  }
  return out;
}

Dataset gen_blobs_dataset(std::size_t n, int num_classes, std::size_t dim,
                          double separation, std::uint64_t seed, Split split) {
  if (n == 0 || num_classes < 2 || dim == 0) {
    throw InvalidInput("gen_blobs_dataset: need n > 0, >= 2 classes, dim > 0");
  }
  Rng rng(seed);
  Matrix<double> centers(static_cast<std::size_t>(num_classes), dim);
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    double norm = 0.0;
    for (double& v : centers.row(c)) {
      v = standard_normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : centers.row(c)) v *= separation / norm;
  }
  Dataset out;
  out.split = split;
  out.num_classes = num_classes;
  out.features = Matrix<float>(n, dim);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    out.labels[i] = label;
    for (std::size_t d = 0; d < dim; ++d) {
      out.features(i, d) = static_cast<float>(
          centers(static_cast<std::size_t>(label), d) + standard_normal(rng));
    }
  }
  return out;
}

std::pair<Dataset, Dataset> split_dataset_biased(const Dataset& data,
                                                 int class_cut, double frac) {
  if (!(frac > 0.0 && frac < 1.0)) {
    throw InvalidInput("split_dataset_biased: frac must lie in (0, 1)");
  }
  std::vector<std::size_t> seen(static_cast<std::size_t>(data.num_classes), 0);
  std::vector<std::size_t> a_idx;
  std::vector<std::size_t> b_idx;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const int y = data.labels[r];
    const std::size_t k = seen[static_cast<std::size_t>(y)]++;
    const bool hit = std::floor(static_cast<double>(k + 1) * frac) >
                     std::floor(static_cast<double>(k) * frac);
    const bool to_a = y < class_cut ? hit : !hit;
    (to_a ? a_idx : b_idx).push_back(r);
  }
  return {select_rows(data, a_idx), select_rows(data, b_idx)};
}

}  // namespace rebasin
