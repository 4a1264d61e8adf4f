// AVX512F GEMM kernels, 8x32 microkernel. The non-GEMM entries reuse the AVX2
// implementations: every AVX512F part also runs AVX2+FMA, and those kernels are
// bandwidth-bound anyway. Compiled with -mavx512f -mfma for this file only.

#include <cstdint>
#include <vector>

#include "lumos/kern/backend.hpp"

#if defined(__x86_64__)
#include <immintrin.h>

namespace lumos::kern {

const Backend* avx2_backend_or_null();  // defined in kern_avx2.cpp

namespace avx512_detail {

constexpr int MR = 8;
constexpr int NR = 32;
constexpr int KC = 256;
constexpr int NC = 1024;

inline std::vector<float>& scratch_a() {
  thread_local std::vector<float> buf;
  return buf;
}
inline std::vector<float>& scratch_b() {
  thread_local std::vector<float> buf;
  return buf;
}

inline void pack_a(bool trans, int M, int kc, float alpha, const float* A,
                   int lda, int k0, float* Ap) {
  const int nblk = (M + MR - 1) / MR;
  for (int blk = 0; blk < nblk; ++blk) {
    float* dst = Ap + (int64_t)blk * kc * MR;
    const int rows = (blk * MR + MR <= M) ? MR : (M - blk * MR);
    for (int k = 0; k < kc; ++k) {
      for (int r = 0; r < MR; ++r) {
        float v = 0.0f;
        if (r < rows) {
          v = trans ? A[(int64_t)(k0 + k) * lda + blk * MR + r]
                    : A[(int64_t)(blk * MR + r) * lda + k0 + k];
        }
        dst[k * MR + r] = alpha * v;
      }
    }
  }
}

inline void pack_b(int kc, int nc, const float* B, int ldb, int k0, int j0,
                   float* Bp) {
  const int nstripe = (nc + NR - 1) / NR;
  for (int s = 0; s < nstripe; ++s) {
    float* dst = Bp + (int64_t)s * kc * NR;
    const int cols = (s * NR + NR <= nc) ? NR : (nc - s * NR);
    for (int k = 0; k < kc; ++k) {
      const float* src = B + (int64_t)(k0 + k) * ldb + j0 + s * NR;
      if (cols == NR) {
        _mm512_storeu_ps(dst + k * NR, _mm512_loadu_ps(src));
        _mm512_storeu_ps(dst + k * NR + 16, _mm512_loadu_ps(src + 16));
      } else {
        for (int c = 0; c < NR; ++c)
          dst[k * NR + c] = c < cols ? src[c] : 0.0f;
      }
    }
  }
}

template <int ROWS>
inline void micro_8x32(int kc, const float* Ap, const float* Bp, float* C,
                       int ldc, float beta, int valid_cols) {
  __m512 acc[ROWS][2];
  for (int r = 0; r < ROWS; ++r) {
    acc[r][0] = _mm512_setzero_ps();
    acc[r][1] = _mm512_setzero_ps();
  }
  for (int k = 0; k < kc; ++k) {
    const __m512 b0 = _mm512_loadu_ps(Bp);
    const __m512 b1 = _mm512_loadu_ps(Bp + 16);
    Bp += NR;
    for (int r = 0; r < ROWS; ++r) {
      const __m512 a = _mm512_set1_ps(Ap[r]);
      acc[r][0] = _mm512_fmadd_ps(a, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_ps(a, b1, acc[r][1]);
    }
    Ap += MR;
  }
  const int v0 = valid_cols < 16 ? valid_cols : 16;
  const int v1 = valid_cols - v0;
  const __mmask16 m0 = (__mmask16)((v0 >= 16) ? 0xFFFFu : ((1u << v0) - 1u));
  const __mmask16 m1 = (__mmask16)((v1 >= 16) ? 0xFFFFu : ((1u << v1) - 1u));
  const __m512 vb = _mm512_set1_ps(beta);
  for (int r = 0; r < ROWS; ++r) {
    float* c = C + (int64_t)r * ldc;
    __m512 r0 = acc[r][0];
    __m512 r1 = acc[r][1];
    if (beta != 0.0f) {
      r0 = _mm512_fmadd_ps(vb, _mm512_maskz_loadu_ps(m0, c), r0);
      r1 = _mm512_fmadd_ps(vb, _mm512_maskz_loadu_ps(m1, c + 16), r1);
    }
    _mm512_mask_storeu_ps(c, m0, r0);
    _mm512_mask_storeu_ps(c + 16, m1, r1);
  }
}

inline void run_micro(int rows, int kc, const float* Ap, const float* Bp,
                      float* C, int ldc, float beta, int valid_cols) {
  switch (rows) {
    case 8: micro_8x32<8>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 7: micro_8x32<7>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 6: micro_8x32<6>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 5: micro_8x32<5>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 4: micro_8x32<4>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 3: micro_8x32<3>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 2: micro_8x32<2>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    default: micro_8x32<1>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
  }
}

template <bool TRANS_A>
void gemm_packed(int M, int N, int K, float alpha, const float* A, int lda,
                 const float* B, int ldb, float beta, float* C, int ldc) {
  const int nblk = (M + MR - 1) / MR;
  scratch_a().resize((size_t)nblk * MR * KC);
  scratch_b().resize((size_t)KC * NC);
  float* Ap = scratch_a().data();
  float* Bp = scratch_b().data();

  for (int pc = 0; pc < K; pc += KC) {
    const int kc = K - pc < KC ? K - pc : KC;
    const float beta_eff = pc == 0 ? beta : 1.0f;
    pack_a(TRANS_A, M, kc, alpha, A, lda, pc, Ap);
    for (int jc = 0; jc < N; jc += NC) {
      const int nc = N - jc < NC ? N - jc : NC;
      pack_b(kc, nc, B, ldb, pc, jc, Bp);
      const int nstripe = (nc + NR - 1) / NR;
      for (int blk = 0; blk < nblk; ++blk) {
        const int rows = (blk * MR + MR <= M) ? MR : (M - blk * MR);
        for (int s = 0; s < nstripe; ++s) {
          const int cols = (s * NR + NR <= nc) ? NR : (nc - s * NR);
          run_micro(rows, kc, Ap + (int64_t)blk * kc * MR,
                    Bp + (int64_t)s * kc * NR,
                    C + (int64_t)(blk * MR) * ldc + jc + s * NR, ldc, beta_eff,
                    cols);
        }
      }
    }
  }
}

void sgemm_nn(int M, int N, int K, float alpha, const float* A, int lda,
              const float* B, int ldb, float beta, float* C, int ldc) {
  gemm_packed<false>(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
}

void sgemm_tn(int M, int N, int K, float alpha, const float* A, int lda,
              const float* B, int ldb, float beta, float* C, int ldc) {
  gemm_packed<true>(M, N, K, alpha, A, lda, B, ldb, beta, C, ldc);
}

// M*N dot products over contiguous K, 2x4 tiles.
void sgemm_nt(int M, int N, int K, float alpha, const float* A, int lda,
              const float* B, int ldb, float beta, float* C, int ldc) {
  int i = 0;
  for (; i + 2 <= M; i += 2) {
    const float* a0 = A + (int64_t)i * lda;
    const float* a1 = a0 + lda;
    int j = 0;
    for (; j + 4 <= N; j += 4) {
      __m512 acc[2][4];
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) acc[r][c] = _mm512_setzero_ps();
      const float* bs[4] = {B + (int64_t)j * ldb, B + (int64_t)(j + 1) * ldb,
                            B + (int64_t)(j + 2) * ldb,
                            B + (int64_t)(j + 3) * ldb};
      int64_t k = 0;
      for (; k + 16 <= K; k += 16) {
        const __m512 va0 = _mm512_loadu_ps(a0 + k);
        const __m512 va1 = _mm512_loadu_ps(a1 + k);
        for (int c = 0; c < 4; ++c) {
          const __m512 vb = _mm512_loadu_ps(bs[c] + k);
          acc[0][c] = _mm512_fmadd_ps(va0, vb, acc[0][c]);
          acc[1][c] = _mm512_fmadd_ps(va1, vb, acc[1][c]);
        }
      }
      for (int r = 0; r < 2; ++r) {
        const float* a = r == 0 ? a0 : a1;
        float* c = C + (int64_t)(i + r) * ldc + j;
        for (int col = 0; col < 4; ++col) {
          float sum = _mm512_reduce_add_ps(acc[r][col]);
          for (int64_t kk = k; kk < K; ++kk) sum += a[kk] * bs[col][kk];
          c[col] = alpha * sum + (beta == 0.0f ? 0.0f : beta * c[col]);
        }
      }
    }
    for (; j < N; ++j) {
      const float* b = B + (int64_t)j * ldb;
      for (int r = 0; r < 2; ++r) {
        const float* a = r == 0 ? a0 : a1;
        __m512 acc = _mm512_setzero_ps();
        int64_t k = 0;
        for (; k + 16 <= K; k += 16)
          acc = _mm512_fmadd_ps(_mm512_loadu_ps(a + k), _mm512_loadu_ps(b + k), acc);
        float sum = _mm512_reduce_add_ps(acc);
        for (; k < K; ++k) sum += a[k] * b[k];
        float* c = C + (int64_t)(i + r) * ldc + j;
        *c = alpha * sum + (beta == 0.0f ? 0.0f : beta * *c);
      }
    }
  }
  for (; i < M; ++i) {
    const float* a = A + (int64_t)i * lda;
    for (int j = 0; j < N; ++j) {
      const float* b = B + (int64_t)j * ldb;
      __m512 acc = _mm512_setzero_ps();
      int64_t k = 0;
      for (; k + 16 <= K; k += 16)
        acc = _mm512_fmadd_ps(_mm512_loadu_ps(a + k), _mm512_loadu_ps(b + k), acc);
      float sum = _mm512_reduce_add_ps(acc);
      for (; k < K; ++k) sum += a[k] * b[k];
      float* c = C + (int64_t)i * ldc + j;
      *c = alpha * sum + (beta == 0.0f ? 0.0f : beta * *c);
    }
  }
}

}  // namespace avx512_detail

const Backend* avx512_backend_or_null() {
  if (!__builtin_cpu_supports("avx512f")) return nullptr;
  const Backend* base = avx2_backend_or_null();
  if (!base) return nullptr;
  static const Backend b = [&] {
    Backend out = *base;
    out.name = "avx512";
    out.sgemm_nn = avx512_detail::sgemm_nn;
    out.sgemm_tn = avx512_detail::sgemm_tn;
    out.sgemm_nt = avx512_detail::sgemm_nt;
    return out;
  }();
  return &b;
}

}  // namespace lumos::kern

#else
namespace lumos::kern {
const Backend* avx512_backend_or_null() { return nullptr; }
}
#endif
