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

// Shared fixtures for the unit tests.

#ifndef REBASIN_TESTS_TEST_UTIL_HPP_
#define REBASIN_TESTS_TEST_UTIL_HPP_

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "rebasin/dataset.hpp"
#include "rebasin/model.hpp"
#include "rebasin/random.hpp"

namespace rebasin::testing {

// Gaussian weights with standard deviation `scale`, Gaussian biases.
template <typename T>
Mlp<T> random_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed,
                  double scale = 1.0, Activation act = Activation::kRelu) {
  Rng rng(seed);
  Mlp<T> m = Mlp<T>::zeros(dims, act);
  for (auto span : m.parameter_spans()) {
    for (T& v : span) v = static_cast<T>(scale * standard_normal(rng));
  }
  return m;
}

template <typename T>
Matrix<T> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                        double scale = 1.0) {
  Rng rng(seed);
  Matrix<T> m(rows, cols);
  for (T& v : m.values()) v = static_cast<T>(scale * standard_normal(rng));
  return m;
}

inline std::filesystem::path mnist_dir() { return default_data_dir(); }

inline bool have_mnist() {
  const auto dir = mnist_dir();
  return !dir.empty() &&
         std::filesystem::exists(dir / "train-images-idx3-ubyte") &&
         std::filesystem::exists(dir / "t10k-images-idx3-ubyte");
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "rebasin_" + tag;
    if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace rebasin::testing

#define REBASIN_REQUIRE_MNIST()                                       \
  do {                                                                \
    if (!::rebasin::testing::have_mnist()) {                          \
      GTEST_SKIP() << "MNIST not found; set REBASIN_DATA_DIR";        \
    }                                                                 \
  } while (0)

#endif  // REBASIN_TESTS_TEST_UTIL_HPP_
