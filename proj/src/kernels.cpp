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

#include "rebasin/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>

#include "rebasin/errors.hpp"

namespace rebasin::kernels {
namespace {

using Index = std::int64_t;

void check_inner(std::size_t a_dim, std::size_t b_dim, const char* what) {
  if (a_dim != b_dim) {
    throw InvalidInput(std::string(what) + ": inner dimensions differ (" +
                       std::to_string(a_dim) + " vs " + std::to_string(b_dim) +
                       ")");
  }
}

// Four dot products of one row of A against four rows of B.
template <typename T>
inline void dot4(const T* __restrict a, const T* __restrict b0,
                 const T* __restrict b1, const T* __restrict b2,
                 const T* __restrict b3, Index k, T* out) {
  T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
  for (Index p = 0; p < k; ++p) {
    const T av = a[p];
    s0 += av * b0[p];
    s1 += av * b1[p];
    s2 += av * b2[p];
    s3 += av * b3[p];
  }
  out[0] = s0;
  out[1] = s1;
  out[2] = s2;
  out[3] = s3;
}

template <typename T>
inline T dot1(const T* __restrict a, const T* __restrict b, Index k) {
  T s = 0;
#pragma omp simd reduction(+ : s)
  for (Index p = 0; p < k; ++p) s += a[p] * b[p];
  return s;
}

// c[0:n) += alpha * b[0:n)
template <typename T>
inline void axpy(T alpha, const T* __restrict b, T* __restrict c, Index n) {
#pragma omp simd
  for (Index j = 0; j < n; ++j) c[j] += alpha * b[j];
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

template <typename T>
Matrix<T> matmul_abt(const Matrix<T>& a, const Matrix<T>& b) {
  check_inner(a.cols(), b.cols(), "matmul_abt");
  const Index m = static_cast<Index>(a.rows());
  const Index n = static_cast<Index>(b.rows());
  const Index k = static_cast<Index>(a.cols());
  Matrix<T> c(a.rows(), b.rows());
  const T* ad = a.data();
  const T* bd = b.data();
  T* cd = c.data();
  const Index n4 = n - n % 4;
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < m; ++i) {
    const T* ai = ad + i * k;
    T* ci = cd + i * n;
    for (Index j = 0; j < n4; j += 4) {
      dot4(ai, bd + j * k, bd + (j + 1) * k, bd + (j + 2) * k,
           bd + (j + 3) * k, k, ci + j);
    }
    for (Index j = n4; j < n; ++j) ci[j] = dot1(ai, bd + j * k, k);
  }
  return c;
}

template <typename T>
Matrix<T> matmul_atb(const Matrix<T>& a, const Matrix<T>& b) {
  check_inner(a.rows(), b.rows(), "matmul_atb");
  const Matrix<T> at = a.transposed();
  const Index m = static_cast<Index>(a.cols());
  const Index n = static_cast<Index>(b.cols());
  const Index k = static_cast<Index>(a.rows());
  Matrix<T> c(a.cols(), b.cols());
  const T* atd = at.data();
  const T* bd = b.data();
  T* cd = c.data();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < m; ++i) {
    const T* ai = atd + i * k;
    T* ci = cd + i * n;
    for (Index p = 0; p < k; ++p) {
      const T alpha = ai[p];
      if (alpha == T{0}) continue;
      axpy(alpha, bd + p * n, ci, n);
    }
  }
  return c;
}

template <typename T>
Matrix<T> matmul_ab(const Matrix<T>& a, const Matrix<T>& b) {
  check_inner(a.cols(), b.rows(), "matmul_ab");
  const Index m = static_cast<Index>(a.rows());
  const Index n = static_cast<Index>(b.cols());
  const Index k = static_cast<Index>(a.cols());
  Matrix<T> c(a.rows(), b.cols());
  const T* ad = a.data();
  const T* bd = b.data();
  T* cd = c.data();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < m; ++i) {
    const T* ai = ad + i * k;
    T* ci = cd + i * n;
    for (Index p = 0; p < k; ++p) {
      const T alpha = ai[p];
      if (alpha == T{0}) continue;
      axpy(alpha, bd + p * n, ci, n);
    }
  }
  return c;
}

template <typename T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w,
                 std::span<const T> bias, bool relu) {
  if (bias.size() != w.rows()) {
    throw InvalidInput("affine: bias length does not match weight rows");
  }
  // Row-times-matrix form: zero inputs (blank pixels, inactive ReLUs) skip
  // a whole row of W^T.
  Matrix<T> y = matmul_ab(x, w.transposed());
  const Index m = static_cast<Index>(y.rows());
  const Index n = static_cast<Index>(y.cols());
  T* yd = y.data();
  const T* bd = bias.data();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < m; ++i) {
    T* yi = yd + i * n;
    for (Index j = 0; j < n; ++j) {
      const T v = yi[j] + bd[j];
      yi[j] = relu ? std::max(v, T{0}) : v;
    }
  }
  return y;
}

namespace reference {

template <typename T>
Matrix<T> matmul_abt(const Matrix<T>& a, const Matrix<T>& b) {
  check_inner(a.cols(), b.cols(), "matmul_abt");
  Matrix<T> c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      T s = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) = s;
    }
  }
  return c;
}

template <typename T>
Matrix<T> matmul_atb(const Matrix<T>& a, const Matrix<T>& b) {
  check_inner(a.rows(), b.rows(), "matmul_atb");
  Matrix<T> c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T s = 0;
      for (std::size_t p = 0; p < a.rows(); ++p) s += a(p, i) * b(p, j);
      c(i, j) = s;
    }
  }
  return c;
}

template <typename T>
Matrix<T> matmul_ab(const Matrix<T>& a, const Matrix<T>& b) {
  check_inner(a.cols(), b.rows(), "matmul_ab");
  Matrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T s = 0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  }
  return c;
}

template <typename T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w,
                 std::span<const T> bias, bool relu) {
  if (bias.size() != w.rows()) {
    throw InvalidInput("affine: bias length does not match weight rows");
  }
  Matrix<T> y = reference::matmul_abt(x, w);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.cols(); ++j) {
      const T v = y(i, j) + bias[j];
      y(i, j) = relu ? std::max(v, T{0}) : v;
    }
  }
  return y;
}

}  // namespace reference

#define REBASIN_INSTANTIATE_KERNELS(T)                                        \
  template Matrix<T> matmul_abt(const Matrix<T>&, const Matrix<T>&);          \
  template Matrix<T> matmul_atb(const Matrix<T>&, const Matrix<T>&);          \
  template Matrix<T> matmul_ab(const Matrix<T>&, const Matrix<T>&);           \
  template Matrix<T> affine(const Matrix<T>&, const Matrix<T>&,               \
                            std::span<const T>, bool);                        \
  template Matrix<T> reference::matmul_abt(const Matrix<T>&,                  \
                                           const Matrix<T>&);                 \
  template Matrix<T> reference::matmul_atb(const Matrix<T>&,                  \
                                           const Matrix<T>&);                 \
  template Matrix<T> reference::matmul_ab(const Matrix<T>&, const Matrix<T>&); \
  template Matrix<T> reference::affine(const Matrix<T>&, const Matrix<T>&,    \
                                       std::span<const T>, bool);

REBASIN_INSTANTIATE_KERNELS(float)
REBASIN_INSTANTIATE_KERNELS(double)

#undef REBASIN_INSTANTIATE_KERNELS

}  // namespace rebasin::kernels
