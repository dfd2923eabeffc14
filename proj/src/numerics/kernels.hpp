// Copyright 2026 The empchat Authors
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

// Row-major GEMM kernels.
//
// Every output element is accumulated over the inner dimension in ascending
// order, independent of the outer extents. Row i of a product therefore only
// depends on row i of the left operand, bit for bit, whatever the number of
// rows. The causality and EMO-independence checks rely on this.

#pragma once

#include <cstddef>
#include <cstring>
#include <vector>

namespace empchat::kernels {

namespace detail {

#if defined(__AVX512F__)
inline constexpr std::size_t kVectorBytes = 64;
#elif defined(__AVX__)
inline constexpr std::size_t kVectorBytes = 32;
#else
inline constexpr std::size_t kVectorBytes = 16;
#endif

template <typename T>
struct Vec {
  typedef T type __attribute__((vector_size(kVectorBytes)));
  static constexpr std::size_t kLanes = kVectorBytes / sizeof(T);
};

// R x (NV * lanes) output tile held in vector registers across the whole
// inner loop. Each element starts from C (or zero) and adds its products in
// ascending p order, exactly like the scalar tail below.
template <typename T, std::size_t R, std::size_t NV>
inline void vector_tile(std::size_t n, std::size_t k, const T* __restrict a,
                        const T* __restrict b, T* __restrict c, bool accumulate) {
  using V = typename Vec<T>::type;
  constexpr std::size_t L = Vec<T>::kLanes;
  V acc[R][NV];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < NV; ++v) {
      if (accumulate) {
        std::memcpy(&acc[r][v], c + r * n + v * L, sizeof(V));
      } else {
        acc[r][v] = V{};
      }
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    V bv[NV];
    for (std::size_t v = 0; v < NV; ++v) std::memcpy(&bv[v], b + p * n + v * L, sizeof(V));
    for (std::size_t r = 0; r < R; ++r) {
      const V av = V{} + a[r * k + p];
      for (std::size_t v = 0; v < NV; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t v = 0; v < NV; ++v) std::memcpy(c + r * n + v * L, &acc[r][v], sizeof(V));
  }
}

template <typename T>
inline void scalar_tile(std::size_t rows, std::size_t n, std::size_t k, std::size_t width,
                        const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) {
      T acc = accumulate ? c[r * n + j] : T{};
      for (std::size_t p = 0; p < k; ++p) acc += a[r * k + p] * b[p * n + j];
      c[r * n + j] = acc;
    }
  }
}

template <typename T, std::size_t R>
inline void row_block(std::size_t n, std::size_t k, const T* a, const T* b, T* c,
                      bool accumulate) {
  constexpr std::size_t kWide = 2 * Vec<T>::kLanes;
  std::size_t j = 0;
  for (; j + kWide <= n; j += kWide) vector_tile<T, R, 2>(n, k, a, b + j, c + j, accumulate);
  for (; j + Vec<T>::kLanes <= n; j += Vec<T>::kLanes) {
    vector_tile<T, R, 1>(n, k, a, b + j, c + j, accumulate);
  }
  if (j < n) scalar_tile(R, n, k, n - j, a, b + j, c + j, accumulate);
}

}  // namespace detail

/// C[m x n] (+)= A[m x k] . B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* __restrict a,
             const T* __restrict b, T* __restrict c, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) detail::row_block<T, 4>(n, k, a + i * k, b, c + i * n, accumulate);
  for (; i < m; ++i) detail::row_block<T, 1>(n, k, a + i * k, b, c + i * n, accumulate);
}

/// out[cols x rows] = in[rows x cols]^T
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t r1 = r0 + kBlock < rows ? r0 + kBlock : rows;
      const std::size_t c1 = c0 + kBlock < cols ? c0 + kBlock : cols;
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
      }
    }
  }
}

/// C[m x n] (+)= A[m x k] . B[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  std::vector<T> bt(n * k);
  transpose(n, k, b, bt.data());
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

/// C[m x n] += A[k x m]^T . B[k x n]
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  std::vector<T> at(m * k);
  transpose(k, m, a, at.data());
  gemm_nn(m, n, k, at.data(), b, c, /*accumulate=*/true);
}

}  // namespace empchat::kernels
