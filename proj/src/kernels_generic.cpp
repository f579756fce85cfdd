#include "st3d/kernels.hpp"

namespace st3d::kernels::generic {

template <typename T>
static void scale_or_zero_row(T* c, int64_t n, T beta) {
  if (beta == T(0)) {
    for (int64_t j = 0; j < n; ++j) c[j] = T(0);
  } else if (beta != T(1)) {
    for (int64_t j = 0; j < n; ++j) c[j] *= beta;
  }
}

template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, T alpha, const T* a,
             int64_t lda, const T* b, int64_t ldb, T beta, T* c,
             int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    scale_or_zero_row(crow, n, beta);
    for (int64_t p = 0; p < k; ++p) {
      const T t = alpha * a[i * lda + p];
      const T* brow = b + p * ldb;
      for (int64_t j = 0; j < n; ++j) crow[j] += t * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(int64_t m, int64_t n, int64_t k, T alpha, const T* a,
             int64_t lda, const T* b, int64_t ldb, T beta, T* c,
             int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * ldb;
      T acc = T(0);
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      T& out = c[i * ldc + j];
      out = alpha * acc + (beta == T(0) ? T(0) : beta * out);
    }
  }
}

template <typename T>
void gemm_tn(int64_t m, int64_t n, int64_t k, T alpha, const T* a,
             int64_t lda, const T* b, int64_t ldb, T beta, T* c,
             int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    scale_or_zero_row(crow, n, beta);
    for (int64_t p = 0; p < k; ++p) {
      const T t = alpha * a[p * lda + i];
      const T* brow = b + p * ldb;
      for (int64_t j = 0; j < n; ++j) crow[j] += t * brow[j];
    }
  }
}

template <typename T>
void add(T* out, const T* a, const T* b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(T* out, const T* a, const T* b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(T* out, const T* a, const T* b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale(T* out, const T* a, T s, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

template <typename T>
void axpy(T* y, T a, const T* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void fill(T* x, T v, int64_t n) {
  for (int64_t i = 0; i < n; ++i) x[i] = v;
}

template <typename T>
void relu_fwd(T* y, const T* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd(T* dx, const T* x, const T* dy, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
T sum(const T* x, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
T sq_diff_sum(const T* x, T mu, int64_t n) {
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const T d = x[i] - mu;
    acc += d * d;
  }
  return acc;
}

template <typename T>
void sum2(const T* dy, const T* x, T mu, int64_t n, T* s_dy, T* s_dyx) {
  T a = T(0), b = T(0);
  for (int64_t i = 0; i < n; ++i) {
    a += dy[i];
    b += dy[i] * (x[i] - mu);
  }
  *s_dy = a;
  *s_dyx = b;
}

template <typename T>
void affine(T* y, const T* x, T a, T b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
}

template <typename T>
void norm_affine(T* y, const T* x, T mu, T a, T b, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = a * (x[i] - mu) + b;
}

template <typename T>
void bn_bwd_apply(T* dx, const T* dy, const T* x, T mu, T A, T B, T C,
                  int64_t n) {
  for (int64_t i = 0; i < n; ++i) dx[i] = A * dy[i] + B * (x[i] - mu) + C;
}

template <typename T>
void sgd_update(T* w, const T* g, T* v, int64_t n, T lr, T momentum, T wd) {
  for (int64_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] + (g[i] + wd * w[i]);
    w[i] -= lr * v[i];
  }
}

#define ST3D_INSTANTIATE(T)                                                   \
  template void gemm_nn<T>(int64_t, int64_t, int64_t, T, const T*, int64_t,  \
                           const T*, int64_t, T, T*, int64_t);               \
  template void gemm_nt<T>(int64_t, int64_t, int64_t, T, const T*, int64_t,  \
                           const T*, int64_t, T, T*, int64_t);               \
  template void gemm_tn<T>(int64_t, int64_t, int64_t, T, const T*, int64_t,  \
                           const T*, int64_t, T, T*, int64_t);               \
  template void add<T>(T*, const T*, const T*, int64_t);                     \
  template void sub<T>(T*, const T*, const T*, int64_t);                     \
  template void mul<T>(T*, const T*, const T*, int64_t);                     \
  template void scale<T>(T*, const T*, T, int64_t);                         \
  template void axpy<T>(T*, T, const T*, int64_t);                          \
  template void fill<T>(T*, T, int64_t);                                    \
  template void relu_fwd<T>(T*, const T*, int64_t);                         \
  template void relu_bwd<T>(T*, const T*, const T*, int64_t);               \
  template T sum<T>(const T*, int64_t);                                     \
  template T sq_diff_sum<T>(const T*, T, int64_t);                          \
  template void sum2<T>(const T*, const T*, T, int64_t, T*, T*);            \
  template void affine<T>(T*, const T*, T, T, int64_t);                     \
  template void norm_affine<T>(T*, const T*, T, T, T, int64_t);             \
  template void bn_bwd_apply<T>(T*, const T*, const T*, T, T, T, T,         \
                                int64_t);                                    \
  template void sgd_update<T>(T*, const T*, T*, int64_t, T, T, T);

ST3D_INSTANTIATE(float)
ST3D_INSTANTIATE(double)

#undef ST3D_INSTANTIATE

}  // namespace st3d::kernels::generic
