// Reference kernels. Plain loops, no ISA assumptions; every SIMD backend is
// tested against these.

#include <cmath>
#include <cstdint>

#include "lumos/kern/backend.hpp"

namespace lumos::kern {
namespace {

void sgemm_nn(int M, int N, int K, float alpha, const float* A, int lda,
              const float* B, int ldb, float beta, float* C, int ldc) {
  for (int i = 0; i < M; ++i) {
    float* c = C + (int64_t)i * ldc;
    if (beta == 0.0f) {
      for (int j = 0; j < N; ++j) c[j] = 0.0f;
    } else if (beta != 1.0f) {
      for (int j = 0; j < N; ++j) c[j] *= beta;
    }
    const float* a = A + (int64_t)i * lda;
    for (int k = 0; k < K; ++k) {
      const float aik = alpha * a[k];
      const float* b = B + (int64_t)k * ldb;
      for (int j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

void sgemm_tn(int M, int N, int K, float alpha, const float* A, int lda,
              const float* B, int ldb, float beta, float* C, int ldc) {
  for (int i = 0; i < M; ++i) {
    float* c = C + (int64_t)i * ldc;
    if (beta == 0.0f) {
      for (int j = 0; j < N; ++j) c[j] = 0.0f;
    } else if (beta != 1.0f) {
      for (int j = 0; j < N; ++j) c[j] *= beta;
    }
    for (int k = 0; k < K; ++k) {
      const float aik = alpha * A[(int64_t)k * lda + i];
      const float* b = B + (int64_t)k * ldb;
      for (int j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

void sgemm_nt(int M, int N, int K, float alpha, const float* A, int lda,
              const float* B, int ldb, float beta, float* C, int ldc) {
  for (int i = 0; i < M; ++i) {
    const float* a = A + (int64_t)i * lda;
    float* c = C + (int64_t)i * ldc;
    for (int j = 0; j < N; ++j) {
      const float* b = B + (int64_t)j * ldb;
      float acc = 0.0f;
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] = alpha * acc + (beta == 0.0f ? 0.0f : beta * c[j]);
    }
  }
}

void axpy(int64_t n, float a, const float* x, float* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale(int64_t n, float a, float* x) {
  for (int64_t i = 0; i < n; ++i) x[i] *= a;
}

void vadd(int64_t n, const float* a, const float* b, float* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void vmul(int64_t n, const float* a, const float* b, float* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

float dot(int64_t n, const float* a, const float* b) {
  float acc = 0.0f;
  for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

float reduce_sum(int64_t n, const float* x) {
  float acc = 0.0f;
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void vexp(int64_t n, const float* x, float* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void vlog(int64_t n, const float* x, float* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = std::log(x[i]);
}

void vsigmoid(int64_t n, const float* x, float* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void relu_fwd(int64_t n, const float* x, float* y) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd(int64_t n, const float* x, const float* gy, float* gx) {
  for (int64_t i = 0; i < n; ++i)
    if (x[i] > 0.0f) gx[i] += gy[i];
}

void min_sqdist(int na, const int32_t* ax, const int32_t* ay, int nb,
                const int32_t* bx, const int32_t* by, int64_t* out) {
  for (int i = 0; i < na; ++i) {
    int64_t best = INT64_MAX;
    for (int j = 0; j < nb; ++j) {
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
  for (int64_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mh = m[i] * inv_bc1;
    const float vh = v[i] * inv_bc2;
    p[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend b{
      "scalar", sgemm_nn, sgemm_tn, sgemm_nt, axpy,     scale,
      vadd,     vmul,     dot,      reduce_sum, vexp,   vlog,
      vsigmoid, relu_fwd, relu_bwd, min_sqdist, adam_step,
  };
  return b;
}

}  // namespace lumos::kern
