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

#ifndef REBASIN_DATASET_HPP_
#define REBASIN_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rebasin/matrix.hpp"

namespace rebasin {

enum class Split { kTrain, kTest };

// Feature rows with integer class labels.
struct Dataset {
  Matrix<float> features;  // n x d
  std::vector<int> labels;  // n entries in [0, num_classes)
  int num_classes = 0;
  Split split = Split::kTrain;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  // Throws InvalidInput if row counts disagree or a label is out of range.
  void validate() const;
};

// Rows at `indices`, in that order.
Dataset select_rows(const Dataset& data, std::span<const std::size_t> indices);

// The first min(n, size) rows.
Dataset head(const Dataset& data, std::size_t n);

// Rows [begin, end).
Dataset slice(const Dataset& data, std::size_t begin, std::size_t end);

// A uniformly random subset of round(frac * n) rows, kept in dataset order.
Dataset random_fraction(const Dataset& data, double frac, std::uint64_t seed);

// Parses an IDX image file (magic 0x00000803) and label file (magic
// 0x00000801). Pixels are scaled to [0, 1] and each image is flattened into
// one row. Throws ParseError with the byte offset on bad magic, mismatched
// counts, or truncation; InvalidInput if a file cannot be opened.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path,
                 Split split = Split::kTrain);

// Train or test split of MNIST from a directory holding the four standard
// uncompressed IDX files.
Dataset load_mnist(const std::filesystem::path& dir, Split split);

// Directory from REBASIN_DATA_DIR, or empty if unset.
std::filesystem::path default_data_dir();

// x ~ Uniform([-1, 1]^2), label 1 iff x1 < 0 and x2 > 0.
Dataset gen_quadrant_dataset(std::size_t n, std::uint64_t seed,
                             Split split = Split::kTrain);
int quadrant_label(float x1, float x2);

// Unit-variance Gaussian blobs, one per class, centered at distance
// `separation` from the origin in random directions. Classes are balanced (row i has label i % k).
Dataset gen_blobs_dataset(std::size_t n, int num_classes, std::size_t dim,
                          double separation, std::uint64_t seed,
                          Split split = Split::kTrain);

// Biased disjoint split: subset A keeps a fraction `frac` of the rows whose
// label is below `class_cut` and a fraction (1 - frac) of the others; B gets
// the complement. Within each class rows are taken in dataset order and the
// k-th row is a hit iff floor((k+1) frac) > floor(k frac); hits go to A for
// classes below the cut and to B otherwise. A class of n rows thus puts
// exactly floor(n frac) rows on the favored side.
std::pair<Dataset, Dataset> split_dataset_biased(const Dataset& data,
                                                 int class_cut, double frac);

}  // namespace rebasin

#endif  // REBASIN_DATASET_HPP_
