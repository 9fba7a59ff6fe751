/*
 * Copyright 2026 The selfex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Row-major dense kernels. Loop orders keep the innermost loop contiguous so
// the compiler can vectorise it; no kernel reorders a floating-point sum
// between calls, which keeps training bit-reproducible.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace selfex::kernels {

// C[M,N] += A[M,K] * B[K,N]
inline void gemm_nn_acc(std::size_t m, std::size_t k, std::size_t n,
                        const float* a, const float* b, float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    const float* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] = A[M,K] * B[K,N]
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n,
                    const float* a, const float* b, float* c) {
  std::fill(c, c + m * n, 0.0f);
  gemm_nn_acc(m, k, n, a, b, c);
}

// C[M,N] += A[M,K] * B[N,K]^T, via an explicit transpose of B so the inner
// loop stays a contiguous axpy.
inline void gemm_nt_acc(std::size_t m, std::size_t k, std::size_t n,
                        const float* a, const float* b, float* c) {
  thread_local std::vector<float> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn_acc(m, k, n, a, bt.data(), c);
}

// C[M,N] += A[K,M]^T * B[K,N]
inline void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n,
                        const float* a, const float* b, float* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const float* arow = a + p * m;
    const float* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float av = arow[i];
      if (av == 0.0f) continue;
      float* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline double log_sum_exp(const float* x, std::size_t n) {
  float peak = x[0];
  for (std::size_t j = 1; j < n; ++j) peak = std::max(peak, x[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += std::exp(double(x[j]) - peak);
  return peak + std::log(total);
}

inline void softmax_row(const float* x, float* y, std::size_t n) {
  float peak = x[0];
  for (std::size_t j = 1; j < n; ++j) peak = std::max(peak, x[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const float e = std::exp(x[j] - peak);
    y[j] = e;
    total += e;
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < n; ++j) y[j] = static_cast<float>(y[j] * inv);
}

}  // namespace selfex::kernels
