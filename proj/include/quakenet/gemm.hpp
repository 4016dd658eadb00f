/* Copyright 2026 The quakenet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef QUAKENET_GEMM_HPP_
#define QUAKENET_GEMM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace quakenet {
namespace detail {

// Register tile sizes. NR spans two 512-bit vectors for float, two for double.
template <typename T>
struct GemmTile;

template <>
struct GemmTile<float> {
  static constexpr std::size_t kMR = 8;
  static constexpr std::size_t kNR = 32;
};

template <>
struct GemmTile<double> {
  static constexpr std::size_t kMR = 8;
  static constexpr std::size_t kNR = 16;
};

inline constexpr std::size_t kGemmKC = 256;
inline constexpr std::size_t kGemmMC = 128;
inline constexpr std::size_t kGemmNC = 2048;

// Element (i, j) of op(X) where X is row-major with leading dimension ld.
template <typename T>
inline T load_op(const T* x, std::size_t ld, bool trans, std::size_t i,
                 std::size_t j) {
  return trans ? x[j * ld + i] : x[i * ld + j];
}

// Packs rows [i0, i0+mc) x cols [p0, p0+kc) of op(A) into MR-row panels laid
// out [panel][p][MR], zero padded.
template <typename T>
void pack_a(const T* a, std::size_t lda, bool trans_a, std::size_t i0,
            std::size_t mc, std::size_t p0, std::size_t kc, T* out) {
  constexpr std::size_t MR = GemmTile<T>::kMR;
  for (std::size_t ir = 0; ir < mc; ir += MR) {
    const std::size_t rows = std::min(MR, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t i = 0; i < MR; ++i) {
        *out++ = i < rows ? load_op(a, lda, trans_a, i0 + ir + i, p0 + p) : T(0);
      }
    }
  }
}

// Packs rows [p0, p0+kc) x cols [j0, j0+nc) of op(B) into NR-column panels
// laid out [panel][p][NR], zero padded.
template <typename T>
void pack_b(const T* b, std::size_t ldb, bool trans_b, std::size_t p0,
            std::size_t kc, std::size_t j0, std::size_t nc, T* out) {
  constexpr std::size_t NR = GemmTile<T>::kNR;
  for (std::size_t jr = 0; jr < nc; jr += NR) {
    const std::size_t cols = std::min(NR, nc - jr);
    if (!trans_b && cols == NR) {
      for (std::size_t p = 0; p < kc; ++p) {
        const T* src = b + (p0 + p) * ldb + j0 + jr;
        std::copy(src, src + NR, out);
        out += NR;
      }
      continue;
    }
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t j = 0; j < NR; ++j) {
        *out++ = j < cols ? load_op(b, ldb, trans_b, p0 + p, j0 + jr + j) : T(0);
      }
    }
  }
}

// acc = C tile (or zero), then acc += a_p * b_p for p in order, one fused
// multiply-add per term. Every element of C therefore sees the same strictly
// sequential summation over k regardless of tiling or operand position.
template <typename T>
void micro_kernel_generic(std::size_t kc, const T* __restrict a_panel,
                          const T* __restrict b_panel, T* c, std::size_t ldc,
                          std::size_t rows, std::size_t cols, bool load_c) {
  constexpr std::size_t MR = GemmTile<T>::kMR;
  constexpr std::size_t NR = GemmTile<T>::kNR;
  T acc[MR][NR];
  for (std::size_t i = 0; i < MR; ++i) {
    for (std::size_t j = 0; j < NR; ++j) {
      acc[i][j] = (load_c && i < rows && j < cols) ? c[i * ldc + j] : T(0);
    }
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const T* ap = a_panel + p * MR;
    const T* bp = b_panel + p * NR;
    for (std::size_t i = 0; i < MR; ++i) {
      for (std::size_t j = 0; j < NR; ++j) {
        acc[i][j] = std::fma(ap[i], bp[j], acc[i][j]);
      }
    }
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) c[i * ldc + j] = acc[i][j];
  }
}

#if defined(__AVX512F__)

// Full 8 x 32 float tile.
inline void micro_kernel_avx512(std::size_t kc, const float* __restrict a_panel,
                                const float* __restrict b_panel, float* c,
                                std::size_t ldc, bool load_c) {
  __m512 acc[8][2];
  for (int i = 0; i < 8; ++i) {
    acc[i][0] = load_c ? _mm512_loadu_ps(c + i * ldc) : _mm512_setzero_ps();
    acc[i][1] = load_c ? _mm512_loadu_ps(c + i * ldc + 16) : _mm512_setzero_ps();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512 b0 = _mm512_loadu_ps(b_panel + p * 32);
    const __m512 b1 = _mm512_loadu_ps(b_panel + p * 32 + 16);
    const float* ap = a_panel + p * 8;
    for (int i = 0; i < 8; ++i) {
      const __m512 av = _mm512_set1_ps(ap[i]);
      acc[i][0] = _mm512_fmadd_ps(av, b0, acc[i][0]);
      acc[i][1] = _mm512_fmadd_ps(av, b1, acc[i][1]);
    }
  }
  for (int i = 0; i < 8; ++i) {
    _mm512_storeu_ps(c + i * ldc, acc[i][0]);
    _mm512_storeu_ps(c + i * ldc + 16, acc[i][1]);
  }
}

// Full 8 x 16 double tile.
inline void micro_kernel_avx512(std::size_t kc, const double* __restrict a_panel,
                                const double* __restrict b_panel, double* c,
                                std::size_t ldc, bool load_c) {
  __m512d acc[8][2];
  for (int i = 0; i < 8; ++i) {
    acc[i][0] = load_c ? _mm512_loadu_pd(c + i * ldc) : _mm512_setzero_pd();
    acc[i][1] = load_c ? _mm512_loadu_pd(c + i * ldc + 8) : _mm512_setzero_pd();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512d b0 = _mm512_loadu_pd(b_panel + p * 16);
    const __m512d b1 = _mm512_loadu_pd(b_panel + p * 16 + 8);
    const double* ap = a_panel + p * 8;
    for (int i = 0; i < 8; ++i) {
      const __m512d av = _mm512_set1_pd(ap[i]);
      acc[i][0] = _mm512_fmadd_pd(av, b0, acc[i][0]);
      acc[i][1] = _mm512_fmadd_pd(av, b1, acc[i][1]);
    }
  }
  for (int i = 0; i < 8; ++i) {
    _mm512_storeu_pd(c + i * ldc, acc[i][0]);
    _mm512_storeu_pd(c + i * ldc + 8, acc[i][1]);
  }
}

#endif

template <typename T>
void micro_kernel(std::size_t kc, const T* a_panel, const T* b_panel, T* c,
                  std::size_t ldc, std::size_t rows, std::size_t cols,
                  bool load_c) {
#if defined(__AVX512F__)
  if (rows == GemmTile<T>::kMR && cols == GemmTile<T>::kNR) {
    micro_kernel_avx512(kc, a_panel, b_panel, c, ldc, load_c);
    return;
  }
#endif
  micro_kernel_generic(kc, a_panel, b_panel, c, ldc, rows, cols, load_c);
}

}  // namespace detail

/// C = op(A) * op(B), or C += op(A) * op(B) when `accumulate` is set.
///
/// Operands are row-major; op(X) is X or its transpose. op(A) is m x k, op(B)
/// is k x n and C is m x n. For each output element the products are added in
/// increasing k order with fused multiply-adds starting from the prior value
/// (or zero), so results do not depend on operand sizes, and a row of C is
/// independent of the other rows of A.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  using detail::kGemmKC;
  using detail::kGemmMC;
  using detail::kGemmNC;
  constexpr std::size_t MR = detail::GemmTile<T>::kMR;
  constexpr std::size_t NR = detail::GemmTile<T>::kNR;
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
    }
    return;
  }

  thread_local std::vector<T> a_pack;
  thread_local std::vector<T> b_pack;
  a_pack.resize(((kGemmMC + MR - 1) / MR) * MR * kGemmKC);
  b_pack.resize(((kGemmNC + NR - 1) / NR) * NR * kGemmKC);

  for (std::size_t j0 = 0; j0 < n; j0 += kGemmNC) {
    const std::size_t nc = std::min(kGemmNC, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kGemmKC) {
      const std::size_t kc = std::min(kGemmKC, k - p0);
      const bool load_c = accumulate || p0 > 0;
      detail::pack_b(b, ldb, trans_b, p0, kc, j0, nc, b_pack.data());
      for (std::size_t i0 = 0; i0 < m; i0 += kGemmMC) {
        const std::size_t mc = std::min(kGemmMC, m - i0);
        detail::pack_a(a, lda, trans_a, i0, mc, p0, kc, a_pack.data());
        for (std::size_t jr = 0; jr < nc; jr += NR) {
          const T* b_panel = b_pack.data() + (jr / NR) * NR * kc;
          for (std::size_t ir = 0; ir < mc; ir += MR) {
            const T* a_panel = a_pack.data() + (ir / MR) * MR * kc;
            detail::micro_kernel(kc, a_panel, b_panel,
                                 c + (i0 + ir) * ldc + j0 + jr, ldc,
                                 std::min(MR, mc - ir), std::min(NR, nc - jr),
                                 load_c);
          }
        }
      }
    }
  }
}

}  // namespace quakenet

#endif  // QUAKENET_GEMM_HPP_
