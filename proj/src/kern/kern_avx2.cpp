// AVX2+FMA kernels. Compiled with -mavx2 -mfma for this file only; callers go
// through the runtime-dispatched Backend table, so nothing here runs unless
// __builtin_cpu_supports says the ISA is present.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "lumos/kern/backend.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>

namespace lumos::kern {
namespace avx2_detail {

// ---------------------------------------------------------------------------
// GEMM: packed panels, 6x16 microkernel.
// ---------------------------------------------------------------------------

constexpr int MR = 6;
constexpr int NR = 16;
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

// A panel layout: per 6-row block, k-major: Ap[blk][k][MR]; alpha folded in.
inline void pack_a_nn(int M, int kc, float alpha, const float* A, int lda,
                      int k0, float* Ap) {
  const int nblk = (M + MR - 1) / MR;
  for (int blk = 0; blk < nblk; ++blk) {
    float* dst = Ap + (int64_t)blk * kc * MR;
    const int rows = (blk * MR + MR <= M) ? MR : (M - blk * MR);
    for (int k = 0; k < kc; ++k) {
      for (int r = 0; r < MR; ++r) {
        dst[k * MR + r] =
            r < rows ? alpha * A[(int64_t)(blk * MR + r) * lda + k0 + k] : 0.0f;
      }
    }
  }
}

// Same panel layout but A is stored [K][M] and used transposed.
inline void pack_a_tn(int M, int kc, float alpha, const float* A, int lda,
                      int k0, float* Ap) {
  const int nblk = (M + MR - 1) / MR;
  for (int blk = 0; blk < nblk; ++blk) {
    float* dst = Ap + (int64_t)blk * kc * MR;
    const int rows = (blk * MR + MR <= M) ? MR : (M - blk * MR);
    for (int k = 0; k < kc; ++k) {
      const float* src = A + (int64_t)(k0 + k) * lda + blk * MR;
      for (int r = 0; r < MR; ++r)
        dst[k * MR + r] = r < rows ? alpha * src[r] : 0.0f;
    }
  }
}

// B panel: per 16-column stripe, k-major: Bp[stripe][k][NR], zero padded.
inline void pack_b(int kc, int nc, const float* B, int ldb, int k0, int j0,
                   float* Bp) {
  const int nstripe = (nc + NR - 1) / NR;
  for (int s = 0; s < nstripe; ++s) {
    float* dst = Bp + (int64_t)s * kc * NR;
    const int cols = (s * NR + NR <= nc) ? NR : (nc - s * NR);
    for (int k = 0; k < kc; ++k) {
      const float* src = B + (int64_t)(k0 + k) * ldb + j0 + s * NR;
      if (cols == NR) {
        _mm256_storeu_ps(dst + k * NR, _mm256_loadu_ps(src));
        _mm256_storeu_ps(dst + k * NR + 8, _mm256_loadu_ps(src + 8));
      } else {
        for (int c = 0; c < NR; ++c)
          dst[k * NR + c] = c < cols ? src[c] : 0.0f;
      }
    }
  }
}

template <int ROWS>
inline void micro_6x16(int kc, const float* Ap, const float* Bp, float* C,
                       int ldc, float beta, int valid_cols) {
  __m256 acc[ROWS][2];
  for (int r = 0; r < ROWS; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (int k = 0; k < kc; ++k) {
    const __m256 b0 = _mm256_loadu_ps(Bp);
    const __m256 b1 = _mm256_loadu_ps(Bp + 8);
    Bp += NR;
    for (int r = 0; r < ROWS; ++r) {
      const __m256 a = _mm256_broadcast_ss(Ap + r);
      acc[r][0] = _mm256_fmadd_ps(a, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(a, b1, acc[r][1]);
    }
    Ap += MR;
  }
  if (valid_cols == NR) {
    for (int r = 0; r < ROWS; ++r) {
      float* c = C + (int64_t)r * ldc;
      if (beta == 0.0f) {
        _mm256_storeu_ps(c, acc[r][0]);
        _mm256_storeu_ps(c + 8, acc[r][1]);
      } else {
        const __m256 vb = _mm256_set1_ps(beta);
        _mm256_storeu_ps(c, _mm256_fmadd_ps(vb, _mm256_loadu_ps(c), acc[r][0]));
        _mm256_storeu_ps(
            c + 8, _mm256_fmadd_ps(vb, _mm256_loadu_ps(c + 8), acc[r][1]));
      }
    }
  } else {
    alignas(32) float tmp[NR];
    for (int r = 0; r < ROWS; ++r) {
      _mm256_store_ps(tmp, acc[r][0]);
      _mm256_store_ps(tmp + 8, acc[r][1]);
      float* c = C + (int64_t)r * ldc;
      for (int j = 0; j < valid_cols; ++j)
        c[j] = beta == 0.0f ? tmp[j] : beta * c[j] + tmp[j];
    }
  }
}

inline void run_micro(int rows, int kc, const float* Ap, const float* Bp,
                      float* C, int ldc, float beta, int valid_cols) {
  switch (rows) {
    case 6: micro_6x16<6>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 5: micro_6x16<5>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 4: micro_6x16<4>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 3: micro_6x16<3>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    case 2: micro_6x16<2>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
    default: micro_6x16<1>(kc, Ap, Bp, C, ldc, beta, valid_cols); break;
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
    if constexpr (TRANS_A)
      pack_a_tn(M, kc, alpha, A, lda, pc, Ap);
    else
      pack_a_nn(M, kc, alpha, A, lda, pc, Ap);
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

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
  return _mm_cvtss_f32(lo);
}

inline float dot_row(int64_t K, const float* a, const float* b) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  __m256 acc2 = _mm256_setzero_ps();
  __m256 acc3 = _mm256_setzero_ps();
  int64_t k = 0;
  for (; k + 32 <= K; k += 32) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8), acc1);
    acc2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 16), _mm256_loadu_ps(b + k + 16), acc2);
    acc3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 24), _mm256_loadu_ps(b + k + 24), acc3);
  }
  for (; k + 8 <= K; k += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc0);
  float sum = hsum(_mm256_add_ps(_mm256_add_ps(acc0, acc1),
                                 _mm256_add_ps(acc2, acc3)));
  for (; k < K; ++k) sum += a[k] * b[k];
  return sum;
}

// C[M,N] = alpha*A*B^T + beta*C, i.e. M*N dot products over contiguous K.
// 2x4 tiles keep eight accumulators in flight.
void sgemm_nt(int M, int N, int K, float alpha, const float* A, int lda,
              const float* B, int ldb, float beta, float* C, int ldc) {
  int i = 0;
  for (; i + 2 <= M; i += 2) {
    const float* a0 = A + (int64_t)i * lda;
    const float* a1 = a0 + lda;
    int j = 0;
    for (; j + 4 <= N; j += 4) {
      const float* b0 = B + (int64_t)j * ldb;
      const float* b1 = b0 + ldb;
      const float* b2 = b1 + ldb;
      const float* b3 = b2 + ldb;
      __m256 acc[2][4];
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) acc[r][c] = _mm256_setzero_ps();
      int64_t k = 0;
      for (; k + 8 <= K; k += 8) {
        const __m256 va0 = _mm256_loadu_ps(a0 + k);
        const __m256 va1 = _mm256_loadu_ps(a1 + k);
        const __m256 vb0 = _mm256_loadu_ps(b0 + k);
        const __m256 vb1 = _mm256_loadu_ps(b1 + k);
        const __m256 vb2 = _mm256_loadu_ps(b2 + k);
        const __m256 vb3 = _mm256_loadu_ps(b3 + k);
        acc[0][0] = _mm256_fmadd_ps(va0, vb0, acc[0][0]);
        acc[0][1] = _mm256_fmadd_ps(va0, vb1, acc[0][1]);
        acc[0][2] = _mm256_fmadd_ps(va0, vb2, acc[0][2]);
        acc[0][3] = _mm256_fmadd_ps(va0, vb3, acc[0][3]);
        acc[1][0] = _mm256_fmadd_ps(va1, vb0, acc[1][0]);
        acc[1][1] = _mm256_fmadd_ps(va1, vb1, acc[1][1]);
        acc[1][2] = _mm256_fmadd_ps(va1, vb2, acc[1][2]);
        acc[1][3] = _mm256_fmadd_ps(va1, vb3, acc[1][3]);
      }
      const float* bs[4] = {b0, b1, b2, b3};
      for (int r = 0; r < 2; ++r) {
        const float* a = r == 0 ? a0 : a1;
        float* c = C + (int64_t)(i + r) * ldc + j;
        for (int col = 0; col < 4; ++col) {
          float sum = hsum(acc[r][col]);
          for (int64_t kk = k; kk < K; ++kk) sum += a[kk] * bs[col][kk];
          c[col] = alpha * sum + (beta == 0.0f ? 0.0f : beta * c[col]);
        }
      }
    }
    for (; j < N; ++j) {
      const float* b = B + (int64_t)j * ldb;
      for (int r = 0; r < 2; ++r) {
        float* c = C + (int64_t)(i + r) * ldc + j;
        const float sum = dot_row(K, (r == 0 ? a0 : a1), b);
        *c = alpha * sum + (beta == 0.0f ? 0.0f : beta * *c);
      }
    }
  }
  for (; i < M; ++i) {
    const float* a = A + (int64_t)i * lda;
    for (int j = 0; j < N; ++j) {
      float* c = C + (int64_t)i * ldc + j;
      const float sum = dot_row(K, a, B + (int64_t)j * ldb);
      *c = alpha * sum + (beta == 0.0f ? 0.0f : beta * *c);
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

void axpy(int64_t n, float a, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale(int64_t n, float a, float* x) {
  const __m256 va = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

void vadd(int64_t n, const float* a, const float* b, float* y) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i,
                     _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void vmul(int64_t n, const float* a, const float* b, float* y) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i,
                     _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

float dot(int64_t n, const float* a, const float* b) { return dot_row(n, a, b); }

float reduce_sum(int64_t n, const float* x) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
    acc1 = _mm256_add_ps(acc1, _mm256_loadu_ps(x + i + 8));
  }
  for (; i + 8 <= n; i += 8) acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
  float sum = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) sum += x[i];
  return sum;
}

// ---------------------------------------------------------------------------
// exp/log/sigmoid, cephes-style polynomials (~1 ulp of std::expf/logf).
// ---------------------------------------------------------------------------

inline __m256 exp_ps(__m256 x) {
  const __m256 hi = _mm256_set1_ps(88.3762626647949f);
  const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
  const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
  const __m256 c1 = _mm256_set1_ps(0.693359375f);
  const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
  const __m256 one = _mm256_set1_ps(1.0f);

  x = _mm256_min_ps(x, hi);
  x = _mm256_max_ps(x, lo);

  __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
  fx = _mm256_floor_ps(fx);

  x = _mm256_fnmadd_ps(fx, c1, x);
  x = _mm256_fnmadd_ps(fx, c2, x);

  const __m256 z = _mm256_mul_ps(x, x);
  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, z, x);
  y = _mm256_add_ps(y, one);

  const __m256i emm0 =
      _mm256_slli_epi32(_mm256_add_epi32(_mm256_cvttps_epi32(fx),
                                         _mm256_set1_epi32(0x7f)),
                        23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(emm0));
}

inline __m256 log_ps(__m256 x) {
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 invalid = _mm256_cmp_ps(x, _mm256_setzero_ps(), _CMP_LE_OS);
  x = _mm256_max_ps(x, _mm256_castsi256_ps(_mm256_set1_epi32(0x00800000)));

  __m256i emm0 = _mm256_srli_epi32(_mm256_castps_si256(x), 23);
  emm0 = _mm256_sub_epi32(emm0, _mm256_set1_epi32(0x7f));
  __m256 e = _mm256_cvtepi32_ps(emm0);
  e = _mm256_add_ps(e, one);

  x = _mm256_and_ps(x, _mm256_castsi256_ps(_mm256_set1_epi32(~0x7f800000)));
  x = _mm256_or_ps(x, _mm256_set1_ps(0.5f));

  const __m256 mask = _mm256_cmp_ps(x, _mm256_set1_ps(0.707106781186547524f),
                                    _CMP_LT_OS);
  const __m256 tmp = _mm256_and_ps(x, mask);
  x = _mm256_sub_ps(x, one);
  e = _mm256_sub_ps(e, _mm256_and_ps(one, mask));
  x = _mm256_add_ps(x, tmp);

  const __m256 z = _mm256_mul_ps(x, x);
  __m256 y = _mm256_set1_ps(7.0376836292e-2f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(-1.1514610310e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.1676998740e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(-1.2420140846e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.4249322787e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(-1.6668057665e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(2.0000714765e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(-2.4999993993e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(3.3333331174e-1f));
  y = _mm256_mul_ps(y, x);
  y = _mm256_mul_ps(y, z);
  y = _mm256_fmadd_ps(e, _mm256_set1_ps(-2.12194440e-4f), y);
  y = _mm256_fnmadd_ps(z, _mm256_set1_ps(0.5f), y);
  x = _mm256_add_ps(x, y);
  x = _mm256_fmadd_ps(e, _mm256_set1_ps(0.693359375f), x);
  return _mm256_or_ps(x, invalid);  // NaN for x <= 0
}

void vexp(int64_t n, const float* x, float* y) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, exp_ps(_mm256_loadu_ps(x + i)));
  if (i < n) {
    alignas(32) float tx[8] = {0}, ty[8];
    std::memcpy(tx, x + i, (n - i) * sizeof(float));
    _mm256_store_ps(ty, exp_ps(_mm256_load_ps(tx)));
    std::memcpy(y + i, ty, (n - i) * sizeof(float));
  }
}

void vlog(int64_t n, const float* x, float* y) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, log_ps(_mm256_loadu_ps(x + i)));
  if (i < n) {
    alignas(32) float tx[8], ty[8];
    for (int j = 0; j < 8; ++j) tx[j] = 1.0f;
    std::memcpy(tx, x + i, (n - i) * sizeof(float));
    _mm256_store_ps(ty, log_ps(_mm256_load_ps(tx)));
    std::memcpy(y + i, ty, (n - i) * sizeof(float));
  }
}

void vsigmoid(int64_t n, const float* x, float* y) {
  const __m256 one = _mm256_set1_ps(1.0f);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 e = exp_ps(_mm256_sub_ps(_mm256_setzero_ps(),
                                          _mm256_loadu_ps(x + i)));
    _mm256_storeu_ps(y + i, _mm256_div_ps(one, _mm256_add_ps(one, e)));
  }
  for (; i < n; ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void relu_fwd(int64_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd(int64_t n, const float* x, const float* gy, float* gx) {
  const __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OS);
    const __m256 add = _mm256_and_ps(mask, _mm256_loadu_ps(gy + i));
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), add));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0f) gx[i] += gy[i];
}

void min_sqdist(int na, const int32_t* ax, const int32_t* ay, int nb,
                const int32_t* bx, const int32_t* by, int64_t* out) {
  for (int i = 0; i < na; ++i) {
    const __m256i vax = _mm256_set1_epi32(ax[i]);
    const __m256i vay = _mm256_set1_epi32(ay[i]);
    __m256i vbest = _mm256_set1_epi32(INT32_MAX);
    int j = 0;
    for (; j + 8 <= nb; j += 8) {
      const __m256i dx = _mm256_sub_epi32(vax, _mm256_loadu_si256((const __m256i*)(bx + j)));
      const __m256i dy = _mm256_sub_epi32(vay, _mm256_loadu_si256((const __m256i*)(by + j)));
      const __m256i d = _mm256_add_epi32(_mm256_mullo_epi32(dx, dx),
                                         _mm256_mullo_epi32(dy, dy));
      vbest = _mm256_min_epi32(vbest, d);
    }
    alignas(32) int32_t lanes[8];
    _mm256_store_si256((__m256i*)lanes, vbest);
    int64_t best = INT64_MAX;
    for (int l = 0; l < 8; ++l)
      if (lanes[l] < best) best = lanes[l];
    for (; j < nb; ++j) {
      const int64_t dx = ax[i] - bx[j];
      const int64_t dy = ay[i] - by[j];
      const int64_t d = dx * dx + dy * dy;
      if (d < best) best = d;
    }
    out[i] = best;
  }
}

void adam_step(int64_t n, float* p, const float* g, float* m, float* v,
               float lr, float beta1, float beta2, float eps, float inv_bc1,
               float inv_bc2) {
  const __m256 vb1 = _mm256_set1_ps(beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2);
  const __m256 v1mb1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 v1mb2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 veps = _mm256_set1_ps(eps);
  const __m256 vc1 = _mm256_set1_ps(inv_bc1);
  const __m256 vc2 = _mm256_set1_ps(inv_bc2);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vg = _mm256_loadu_ps(g + i);
    __m256 vm = _mm256_fmadd_ps(vb1, _mm256_loadu_ps(m + i), _mm256_mul_ps(v1mb1, vg));
    __m256 vv = _mm256_fmadd_ps(vb2, _mm256_loadu_ps(v + i),
                                _mm256_mul_ps(v1mb2, _mm256_mul_ps(vg, vg)));
    _mm256_storeu_ps(m + i, vm);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mh = _mm256_mul_ps(vm, vc1);
    const __m256 vh = _mm256_mul_ps(vv, vc2);
    const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vh), veps);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mh), den);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] * inv_bc1) / (std::sqrt(v[i] * inv_bc2) + eps);
  }
}

}  // namespace avx2_detail

const Backend* avx2_backend_or_null() {
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma"))
    return nullptr;
  using namespace avx2_detail;
  static const Backend b{
      "avx2",   sgemm_nn, sgemm_tn, sgemm_nt, axpy,     scale,
      vadd,     vmul,     dot,      reduce_sum, vexp,   vlog,
      vsigmoid, relu_fwd, relu_bwd, min_sqdist, adam_step,
  };
  return &b;
}

}  // namespace lumos::kern

#else
namespace lumos::kern {
const Backend* avx2_backend_or_null() { return nullptr; }
}
#endif
