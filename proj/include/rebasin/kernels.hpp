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

// Dense matrix products used by the forward/backward passes and by the
// profit-matrix construction of the matchers.
//
// Every kernel in `kernels` is OpenMP-parallel over output rows. Each output
// element is produced by exactly one thread with a fixed summation order, so
// results are bit-identical for any thread count. `kernels::reference` holds
// plain serial triple loops kept as a test oracle and benchmark baseline.

#ifndef REBASIN_KERNELS_HPP_
#define REBASIN_KERNELS_HPP_

#include <span>

#include "rebasin/matrix.hpp"

namespace rebasin::kernels {

// C = A * B^T.  A is m x k, B is n x k, C is m x n.
template <typename T>
Matrix<T> matmul_abt(const Matrix<T>& a, const Matrix<T>& b);

// C = A^T * B.  A is k x m, B is k x n, C is m x n.
template <typename T>
Matrix<T> matmul_atb(const Matrix<T>& a, const Matrix<T>& b);

// C = A * B.  A is m x k, B is k x n, C is m x n.
template <typename T>
Matrix<T> matmul_ab(const Matrix<T>& a, const Matrix<T>& b);

// Y = X * W^T + 1 * bias^T, optionally followed by ReLU in place.
template <typename T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w,
                 std::span<const T> bias, bool relu);

// Number of threads the parallel kernels will use.
int max_threads();

namespace reference {

template <typename T>
Matrix<T> matmul_abt(const Matrix<T>& a, const Matrix<T>& b);
template <typename T>
Matrix<T> matmul_atb(const Matrix<T>& a, const Matrix<T>& b);
template <typename T>
Matrix<T> matmul_ab(const Matrix<T>& a, const Matrix<T>& b);
template <typename T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w,
                 std::span<const T> bias, bool relu);

}  // namespace reference
}  // namespace rebasin::kernels

#endif  // REBASIN_KERNELS_HPP_
