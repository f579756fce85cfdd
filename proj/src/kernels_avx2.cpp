#include "st3d/kernels.hpp"

#if ST3D_X86

#include <immintrin.h>

// AVX2+FMA variants of the scalar kernels in kernels_generic.cpp. This file
// is compiled with -mavx2 -mfma; it is only entered after runtime CPU
// detection. Reductions keep a fixed lane order (vector accumulators are
// drained lane by lane), so repeated calls give identical results.

namespace st3d::kernels::avx2 {

namespace {

inline float hsum(__m256 v) {
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, v);
  float s = 0.0f;
  for (int i = 0; i < 8; ++i) s += lanes[i];
  return s;
}

inline double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += lanes[i];
  return s;
}

inline void scale_or_zero_row(float* c, int64_t n, float beta) {
  if (beta == 0.0f) {
    const __m256 z = _mm256_setzero_ps();
    int64_t j = 0;
    for (; j + 8 <= n; j += 8) _mm256_storeu_ps(c + j, z);
    for (; j < n; ++j) c[j] = 0.0f;
  } else if (beta != 1.0f) {
    const __m256 bv = _mm256_set1_ps(beta);
    int64_t j = 0;
    for (; j + 8 <= n; j += 8)
      _mm256_storeu_ps(c + j, _mm256_mul_ps(_mm256_loadu_ps(c + j), bv));
    for (; j < n; ++j) c[j] *= beta;
  }
}

inline void scale_or_zero_row(double* c, int64_t n, double beta) {
  if (beta == 0.0) {
    const __m256d z = _mm256_setzero_pd();
    int64_t j = 0;
    for (; j + 4 <= n; j += 4) _mm256_storeu_pd(c + j, z);
    for (; j < n; ++j) c[j] = 0.0;
  } else if (beta != 1.0) {
    const __m256d bv = _mm256_set1_pd(beta);
    int64_t j = 0;
    for (; j + 4 <= n; j += 4)
      _mm256_storeu_pd(c + j, _mm256_mul_pd(_mm256_loadu_pd(c + j), bv));
    for (; j < n; ++j) c[j] *= beta;
  }
}

// C row i += t * B row p, the saxpy update shared by gemm_nn and gemm_tn.
inline void row_fmadd(float* crow, const float* brow, float t, int64_t n) {
  const __m256 tv = _mm256_set1_ps(t);
  int64_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256 c0 = _mm256_loadu_ps(crow + j);
    __m256 c1 = _mm256_loadu_ps(crow + j + 8);
    c0 = _mm256_fmadd_ps(tv, _mm256_loadu_ps(brow + j), c0);
    c1 = _mm256_fmadd_ps(tv, _mm256_loadu_ps(brow + j + 8), c1);
    _mm256_storeu_ps(crow + j, c0);
    _mm256_storeu_ps(crow + j + 8, c1);
  }
  for (; j + 8 <= n; j += 8) {
    __m256 c0 = _mm256_loadu_ps(crow + j);
    c0 = _mm256_fmadd_ps(tv, _mm256_loadu_ps(brow + j), c0);
    _mm256_storeu_ps(crow + j, c0);
  }
  for (; j < n; ++j) crow[j] += t * brow[j];
}

inline void row_fmadd(double* crow, const double* brow, double t, int64_t n) {
  const __m256d tv = _mm256_set1_pd(t);
  int64_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d c0 = _mm256_loadu_pd(crow + j);
    __m256d c1 = _mm256_loadu_pd(crow + j + 4);
    c0 = _mm256_fmadd_pd(tv, _mm256_loadu_pd(brow + j), c0);
    c1 = _mm256_fmadd_pd(tv, _mm256_loadu_pd(brow + j + 4), c1);
    _mm256_storeu_pd(crow + j, c0);
    _mm256_storeu_pd(crow + j + 4, c1);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = _mm256_loadu_pd(crow + j);
    c0 = _mm256_fmadd_pd(tv, _mm256_loadu_pd(brow + j), c0);
    _mm256_storeu_pd(crow + j, c0);
  }
  for (; j < n; ++j) crow[j] += t * brow[j];
}

inline float dot(const float* a, const float* b, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
  float s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const double* a, const double* b, int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void gemm_nn(int64_t m, int64_t n, int64_t k, float alpha, const float* a,
             int64_t lda, const float* b, int64_t ldb, float beta, float* c,
             int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    float* crow = c + i * ldc;
    scale_or_zero_row(crow, n, beta);
    for (int64_t p = 0; p < k; ++p)
      row_fmadd(crow, b + p * ldb, alpha * a[i * lda + p], n);
  }
}

void gemm_nn(int64_t m, int64_t n, int64_t k, double alpha, const double* a,
             int64_t lda, const double* b, int64_t ldb, double beta,
             double* c, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    scale_or_zero_row(crow, n, beta);
    for (int64_t p = 0; p < k; ++p)
      row_fmadd(crow, b + p * ldb, alpha * a[i * lda + p], n);
  }
}

void gemm_nt(int64_t m, int64_t n, int64_t k, float alpha, const float* a,
             int64_t lda, const float* b, int64_t ldb, float beta, float* c,
             int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    const float* arow = a + i * lda;
    for (int64_t j = 0; j < n; ++j) {
      const float acc = dot(arow, b + j * ldb, k);
      float& out = c[i * ldc + j];
      out = alpha * acc + (beta == 0.0f ? 0.0f : beta * out);
    }
  }
}

void gemm_nt(int64_t m, int64_t n, int64_t k, double alpha, const double* a,
             int64_t lda, const double* b, int64_t ldb, double beta,
             double* c, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * lda;
    for (int64_t j = 0; j < n; ++j) {
      const double acc = dot(arow, b + j * ldb, k);
      double& out = c[i * ldc + j];
      out = alpha * acc + (beta == 0.0 ? 0.0 : beta * out);
    }
  }
}

void gemm_tn(int64_t m, int64_t n, int64_t k, float alpha, const float* a,
             int64_t lda, const float* b, int64_t ldb, float beta, float* c,
             int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    float* crow = c + i * ldc;
    scale_or_zero_row(crow, n, beta);
    for (int64_t p = 0; p < k; ++p)
      row_fmadd(crow, b + p * ldb, alpha * a[p * lda + i], n);
  }
}

void gemm_tn(int64_t m, int64_t n, int64_t k, double alpha, const double* a,
             int64_t lda, const double* b, int64_t ldb, double beta,
             double* c, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    scale_or_zero_row(crow, n, beta);
    for (int64_t p = 0; p < k; ++p)
      row_fmadd(crow, b + p * ldb, alpha * a[p * lda + i], n);
  }
}

void add(float* out, const float* a, const float* b, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void add(double* out, const double* a, const double* b, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(float* out, const float* a, const float* b, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void sub(double* out, const double* a, const double* b, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(float* out, const float* a, const float* b, int64_t n) {
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void mul(double* out, const double* a, const double* b, int64_t n) {
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(
        out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(float* out, const float* a, float s, int64_t n) {
  const __m256 sv = _mm256_set1_ps(s);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), sv));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void scale(double* out, const double* a, double s, int64_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy(float* y, float a, const float* x, int64_t n) { row_fmadd(y, x, a, n); }

void axpy(double* y, double a, const double* x, int64_t n) {
  row_fmadd(y, x, a, n);
}

void fill(float* x, float v, int64_t n) {
  const __m256 vv = _mm256_set1_ps(v);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, vv);
  for (; i < n; ++i) x[i] = v;
}

void fill(double* x, double v, int64_t n) {
  const __m256d vv = _mm256_set1_pd(v);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, vv);
  for (; i < n; ++i) x[i] = v;
}

void relu_fwd(float* y, const float* x, int64_t n) {
  const __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_fwd(double* y, const double* x, int64_t n) {
  const __m256d z = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(float* dx, const float* x, const float* dy, int64_t n) {
  const __m256 z = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), z, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void relu_bwd(double* dx, const double* x, const double* dy, int64_t n) {
  const __m256d z = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

float sum(const float* x, int64_t n) {
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double sum(const double* x, int64_t n) {
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

float sq_diff_sum(const float* x, float mu, int64_t n) {
  const __m256 mv = _mm256_set1_ps(mu);
  __m256 acc = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(x + i), mv);
    acc = _mm256_fmadd_ps(d, d, acc);
  }
  float s = hsum(acc);
  for (; i < n; ++i) {
    const float d = x[i] - mu;
    s += d * d;
  }
  return s;
}

double sq_diff_sum(const double* x, double mu, int64_t n) {
  const __m256d mv = _mm256_set1_pd(mu);
  __m256d acc = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), mv);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - mu;
    s += d * d;
  }
  return s;
}

void sum2(const float* dy, const float* x, float mu, int64_t n, float* s_dy,
          float* s_dyx) {
  const __m256 mv = _mm256_set1_ps(mu);
  __m256 acc_dy = _mm256_setzero_ps();
  __m256 acc_dyx = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 d = _mm256_loadu_ps(dy + i);
    acc_dy = _mm256_add_ps(acc_dy, d);
    acc_dyx = _mm256_fmadd_ps(d, _mm256_sub_ps(_mm256_loadu_ps(x + i), mv),
                              acc_dyx);
  }
  float a = hsum(acc_dy);
  float b = hsum(acc_dyx);
  for (; i < n; ++i) {
    a += dy[i];
    b += dy[i] * (x[i] - mu);
  }
  *s_dy = a;
  *s_dyx = b;
}

void sum2(const double* dy, const double* x, double mu, int64_t n,
          double* s_dy, double* s_dyx) {
  const __m256d mv = _mm256_set1_pd(mu);
  __m256d acc_dy = _mm256_setzero_pd();
  __m256d acc_dyx = _mm256_setzero_pd();
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_loadu_pd(dy + i);
    acc_dy = _mm256_add_pd(acc_dy, d);
    acc_dyx = _mm256_fmadd_pd(d, _mm256_sub_pd(_mm256_loadu_pd(x + i), mv),
                              acc_dyx);
  }
  double a = hsum(acc_dy);
  double b = hsum(acc_dyx);
  for (; i < n; ++i) {
    a += dy[i];
    b += dy[i] * (x[i] - mu);
  }
  *s_dy = a;
  *s_dyx = b;
}

void affine(float* y, const float* x, float a, float b, int64_t n) {
  const __m256 av = _mm256_set1_ps(a);
  const __m256 bv = _mm256_set1_ps(b);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), bv));
  for (; i < n; ++i) y[i] = a * x[i] + b;
}

void affine(double* y, const double* x, double a, double b, int64_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const __m256d bv = _mm256_set1_pd(b);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), bv));
  for (; i < n; ++i) y[i] = a * x[i] + b;
}

void norm_affine(float* y, const float* x, float mu, float a, float b,
                 int64_t n) {
  const __m256 mv = _mm256_set1_ps(mu);
  const __m256 av = _mm256_set1_ps(a);
  const __m256 bv = _mm256_set1_ps(b);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xc = _mm256_sub_ps(_mm256_loadu_ps(x + i), mv);
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, xc, bv));
  }
  for (; i < n; ++i) y[i] = a * (x[i] - mu) + b;
}

void norm_affine(double* y, const double* x, double mu, double a, double b,
                 int64_t n) {
  const __m256d mv = _mm256_set1_pd(mu);
  const __m256d av = _mm256_set1_pd(a);
  const __m256d bv = _mm256_set1_pd(b);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xc = _mm256_sub_pd(_mm256_loadu_pd(x + i), mv);
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, xc, bv));
  }
  for (; i < n; ++i) y[i] = a * (x[i] - mu) + b;
}

void bn_bwd_apply(float* dx, const float* dy, const float* x, float mu,
                  float A, float B, float C, int64_t n) {
  const __m256 av = _mm256_set1_ps(A);
  const __m256 bv = _mm256_set1_ps(B);
  const __m256 cv = _mm256_set1_ps(C);
  const __m256 mv = _mm256_set1_ps(mu);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 t = _mm256_fmadd_ps(av, _mm256_loadu_ps(dy + i), cv);
    const __m256 xc = _mm256_sub_ps(_mm256_loadu_ps(x + i), mv);
    _mm256_storeu_ps(dx + i, _mm256_fmadd_ps(bv, xc, t));
  }
  for (; i < n; ++i) dx[i] = A * dy[i] + B * (x[i] - mu) + C;
}

void bn_bwd_apply(double* dx, const double* dy, const double* x, double mu,
                  double A, double B, double C, int64_t n) {
  const __m256d av = _mm256_set1_pd(A);
  const __m256d bv = _mm256_set1_pd(B);
  const __m256d cv = _mm256_set1_pd(C);
  const __m256d mv = _mm256_set1_pd(mu);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_fmadd_pd(av, _mm256_loadu_pd(dy + i), cv);
    const __m256d xc = _mm256_sub_pd(_mm256_loadu_pd(x + i), mv);
    _mm256_storeu_pd(dx + i, _mm256_fmadd_pd(bv, xc, t));
  }
  for (; i < n; ++i) dx[i] = A * dy[i] + B * (x[i] - mu) + C;
}

void sgd_update(float* w, const float* g, float* v, int64_t n, float lr,
                float momentum, float wd) {
  const __m256 mo = _mm256_set1_ps(momentum);
  const __m256 wdv = _mm256_set1_ps(wd);
  const __m256 lrv = _mm256_set1_ps(lr);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 wv = _mm256_loadu_ps(w + i);
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    vv = _mm256_add_ps(_mm256_mul_ps(mo, vv), _mm256_add_ps(gv, _mm256_mul_ps(wdv, wv)));
    _mm256_storeu_ps(v + i, vv);
    _mm256_storeu_ps(w + i, _mm256_sub_ps(wv, _mm256_mul_ps(lrv, vv)));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + (g[i] + wd * w[i]);
    w[i] -= lr * v[i];
  }
}

void sgd_update(double* w, const double* g, double* v, int64_t n, double lr,
                double momentum, double wd) {
  const __m256d mo = _mm256_set1_pd(momentum);
  const __m256d wdv = _mm256_set1_pd(wd);
  const __m256d lrv = _mm256_set1_pd(lr);
  int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wv = _mm256_loadu_pd(w + i);
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    vv = _mm256_add_pd(_mm256_mul_pd(mo, vv), _mm256_add_pd(gv, _mm256_mul_pd(wdv, wv)));
    _mm256_storeu_pd(v + i, vv);
    _mm256_storeu_pd(w + i, _mm256_sub_pd(wv, _mm256_mul_pd(lrv, vv)));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + (g[i] + wd * w[i]);
    w[i] -= lr * v[i];
  }
}

}  // namespace st3d::kernels::avx2

#endif  // ST3D_X86
