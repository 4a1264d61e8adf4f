#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lumos::kern {

// A backend is one complete set of arithmetic kernels. `scalar` is the
// reference implementation; SIMD variants must agree with it within
// floating-point reassociation tolerance (see tests/test_kernels.cpp).
//
// GEMM conventions: row-major, C is M x N with leading dimension ldc.
//   sgemm_nn: C = alpha * A[M,K] * B[K,N]        + beta * C
//   sgemm_tn: C = alpha * A[K,M]^T * B[K,N]      + beta * C
//   sgemm_nt: C = alpha * A[M,K] * B[N,K]^T      + beta * C
struct Backend {
  const char* name;

  void (*sgemm_nn)(int M, int N, int K, float alpha, const float* A, int lda,
                   const float* B, int ldb, float beta, float* C, int ldc);
  void (*sgemm_tn)(int M, int N, int K, float alpha, const float* A, int lda,
                   const float* B, int ldb, float beta, float* C, int ldc);
  void (*sgemm_nt)(int M, int N, int K, float alpha, const float* A, int lda,
                   const float* B, int ldb, float beta, float* C, int ldc);

  void (*axpy)(int64_t n, float a, const float* x, float* y);  // y += a*x
  void (*scale)(int64_t n, float a, float* x);                 // x *= a
  void (*vadd)(int64_t n, const float* a, const float* b, float* y);
  void (*vmul)(int64_t n, const float* a, const float* b, float* y);
  float (*dot)(int64_t n, const float* a, const float* b);
  float (*reduce_sum)(int64_t n, const float* x);

  void (*vexp)(int64_t n, const float* x, float* y);
  void (*vlog)(int64_t n, const float* x, float* y);  // requires x > 0
  void (*vsigmoid)(int64_t n, const float* x, float* y);

  void (*relu_fwd)(int64_t n, const float* x, float* y);
  // gx += gy where x > 0
  void (*relu_bwd)(int64_t n, const float* x, const float* gy, float* gx);

  // out[i] = min_j (ax[i]-bx[j])^2 + (ay[i]-by[j])^2, 32-bit coords.
  void (*min_sqdist)(int na, const int32_t* ax, const int32_t* ay, int nb,
                     const int32_t* bx, const int32_t* by, int64_t* out);

  // Fused Adam update. inv_bc1/inv_bc2 are the 1/(1-beta^t) bias corrections.
  void (*adam_step)(int64_t n, float* p, const float* g, float* m, float* v,
                    float lr, float beta1, float beta2, float eps,
                    float inv_bc1, float inv_bc2);
};

const Backend& scalar_backend();

// Backends usable on this CPU (scalar always present, SIMD when supported).
std::vector<const Backend*> available_backends();

// Active backend: best available by default; LUMOS_KERNELS=scalar|avx2|avx512
// overrides at process start. set_active() throws for unknown/unsupported names.
const Backend& active();
void set_active(const std::string& name);

}  // namespace lumos::kern
