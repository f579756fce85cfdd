#pragma once

#include <cstdint>

#if defined(__x86_64__) || defined(_M_X64)
#define ST3D_X86 1
#endif

namespace st3d::kernels {

// Bulk numeric primitives behind every hot loop in the engine. Each kernel
// has a scalar reference implementation (namespace generic) and, on x86, an
// AVX2+FMA variant (namespace avx2). Dispatch picks one table at startup
// from CPU features; tests pin the ISA to compare variants against each
// other. Reductions accumulate in a fixed order, so results are
// reproducible for a given ISA choice.

enum class Isa { generic, avx2 };

template <typename T>
struct KernelTable {
  // Row-major C[m,n] = alpha * op(A) * op(B) + beta * C.
  // nn: A[m,k], nt: B is [n,k] (dot of rows), tn: A is [k,m].
  using GemmFn = void (*)(int64_t m, int64_t n, int64_t k, T alpha,
                          const T* a, int64_t lda, const T* b, int64_t ldb,
                          T beta, T* c, int64_t ldc);
  GemmFn gemm_nn;
  GemmFn gemm_nt;
  GemmFn gemm_tn;

  void (*add)(T* out, const T* a, const T* b, int64_t n);
  void (*sub)(T* out, const T* a, const T* b, int64_t n);
  void (*mul)(T* out, const T* a, const T* b, int64_t n);
  void (*scale)(T* out, const T* a, T s, int64_t n);
  void (*axpy)(T* y, T a, const T* x, int64_t n);  // y += a * x
  void (*fill)(T* x, T v, int64_t n);
  void (*relu_fwd)(T* y, const T* x, int64_t n);
  void (*relu_bwd)(T* dx, const T* x, const T* dy, int64_t n);  // dx = x > 0 ? dy : 0
  T (*sum)(const T* x, int64_t n);
  T (*sq_diff_sum)(const T* x, T mu, int64_t n);  // sum((x - mu)^2)
  // s_dy = sum(dy), s_dyx = sum(dy * (x - mu)); one pass, both reductions.
  void (*sum2)(const T* dy, const T* x, T mu, int64_t n, T* s_dy, T* s_dyx);
  void (*affine)(T* y, const T* x, T a, T b, int64_t n);  // y = a*x + b
  // y = a*(x - mu) + b; the batch-norm normalization inner loop. The
  // centered form keeps a zero numerator exactly zero, so a constant
  // channel maps to b bit-exactly.
  void (*norm_affine)(T* y, const T* x, T mu, T a, T b, int64_t n);
  // dx = A*dy + B*(x - mu) + C; the batch-norm input-gradient inner loop.
  void (*bn_bwd_apply)(T* dx, const T* dy, const T* x, T mu, T A, T B, T C,
                       int64_t n);
  // v = momentum*v + (g + wd*w); w -= lr*v
  void (*sgd_update)(T* w, const T* g, T* v, int64_t n, T lr, T momentum,
                     T wd);
};

const KernelTable<float>& table_f32();
const KernelTable<double>& table_f64();

template <typename T>
const KernelTable<T>& table();

bool cpu_has_avx2();
Isa active_isa();
void set_isa(Isa isa);  // throws if the ISA is unsupported on this CPU
void reset_isa();       // back to auto-detection

// Worker count for the row-partitioned gemm wrapper below. Partitioning is
// by output row, so results are identical for any thread count.
int num_threads();
void set_num_threads(int n);

// Dispatched, optionally threaded entry point used by tensor ops and layers.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          T alpha, const T* a, int64_t lda, const T* b, int64_t ldb, T beta,
          T* c, int64_t ldc);

namespace generic {
template <typename T>
void gemm_nn(int64_t m, int64_t n, int64_t k, T alpha, const T* a,
             int64_t lda, const T* b, int64_t ldb, T beta, T* c, int64_t ldc);
template <typename T>
void gemm_nt(int64_t m, int64_t n, int64_t k, T alpha, const T* a,
             int64_t lda, const T* b, int64_t ldb, T beta, T* c, int64_t ldc);
template <typename T>
void gemm_tn(int64_t m, int64_t n, int64_t k, T alpha, const T* a,
             int64_t lda, const T* b, int64_t ldb, T beta, T* c, int64_t ldc);
template <typename T>
void add(T* out, const T* a, const T* b, int64_t n);
template <typename T>
void sub(T* out, const T* a, const T* b, int64_t n);
template <typename T>
void mul(T* out, const T* a, const T* b, int64_t n);
template <typename T>
void scale(T* out, const T* a, T s, int64_t n);
template <typename T>
void axpy(T* y, T a, const T* x, int64_t n);
template <typename T>
void fill(T* x, T v, int64_t n);
template <typename T>
void relu_fwd(T* y, const T* x, int64_t n);
template <typename T>
void relu_bwd(T* dx, const T* x, const T* dy, int64_t n);
template <typename T>
T sum(const T* x, int64_t n);
template <typename T>
T sq_diff_sum(const T* x, T mu, int64_t n);
template <typename T>
void sum2(const T* dy, const T* x, T mu, int64_t n, T* s_dy, T* s_dyx);
template <typename T>
void affine(T* y, const T* x, T a, T b, int64_t n);
template <typename T>
void norm_affine(T* y, const T* x, T mu, T a, T b, int64_t n);
template <typename T>
void bn_bwd_apply(T* dx, const T* dy, const T* x, T mu, T A, T B, T C,
                  int64_t n);
template <typename T>
void sgd_update(T* w, const T* g, T* v, int64_t n, T lr, T momentum, T wd);
}  // namespace generic

#if ST3D_X86
namespace avx2 {
void gemm_nn(int64_t m, int64_t n, int64_t k, float alpha, const float* a,
             int64_t lda, const float* b, int64_t ldb, float beta, float* c,
             int64_t ldc);
void gemm_nt(int64_t m, int64_t n, int64_t k, float alpha, const float* a,
             int64_t lda, const float* b, int64_t ldb, float beta, float* c,
             int64_t ldc);
void gemm_tn(int64_t m, int64_t n, int64_t k, float alpha, const float* a,
             int64_t lda, const float* b, int64_t ldb, float beta, float* c,
             int64_t ldc);
void gemm_nn(int64_t m, int64_t n, int64_t k, double alpha, const double* a,
             int64_t lda, const double* b, int64_t ldb, double beta,
             double* c, int64_t ldc);
void gemm_nt(int64_t m, int64_t n, int64_t k, double alpha, const double* a,
             int64_t lda, const double* b, int64_t ldb, double beta,
             double* c, int64_t ldc);
void gemm_tn(int64_t m, int64_t n, int64_t k, double alpha, const double* a,
             int64_t lda, const double* b, int64_t ldb, double beta,
             double* c, int64_t ldc);
void add(float* out, const float* a, const float* b, int64_t n);
void add(double* out, const double* a, const double* b, int64_t n);
void sub(float* out, const float* a, const float* b, int64_t n);
void sub(double* out, const double* a, const double* b, int64_t n);
void mul(float* out, const float* a, const float* b, int64_t n);
void mul(double* out, const double* a, const double* b, int64_t n);
void scale(float* out, const float* a, float s, int64_t n);
void scale(double* out, const double* a, double s, int64_t n);
void axpy(float* y, float a, const float* x, int64_t n);
void axpy(double* y, double a, const double* x, int64_t n);
void fill(float* x, float v, int64_t n);
void fill(double* x, double v, int64_t n);
void relu_fwd(float* y, const float* x, int64_t n);
void relu_fwd(double* y, const double* x, int64_t n);
void relu_bwd(float* dx, const float* x, const float* dy, int64_t n);
void relu_bwd(double* dx, const double* x, const double* dy, int64_t n);
float sum(const float* x, int64_t n);
double sum(const double* x, int64_t n);
float sq_diff_sum(const float* x, float mu, int64_t n);
double sq_diff_sum(const double* x, double mu, int64_t n);
void sum2(const float* dy, const float* x, float mu, int64_t n, float* s_dy,
          float* s_dyx);
void sum2(const double* dy, const double* x, double mu, int64_t n,
          double* s_dy, double* s_dyx);
void affine(float* y, const float* x, float a, float b, int64_t n);
void affine(double* y, const double* x, double a, double b, int64_t n);
void norm_affine(float* y, const float* x, float mu, float a, float b,
                 int64_t n);
void norm_affine(double* y, const double* x, double mu, double a, double b,
                 int64_t n);
void bn_bwd_apply(float* dx, const float* dy, const float* x, float mu,
                  float A, float B, float C, int64_t n);
void bn_bwd_apply(double* dx, const double* dy, const double* x, double mu,
                  double A, double B, double C, int64_t n);
void sgd_update(float* w, const float* g, float* v, int64_t n, float lr,
                float momentum, float wd);
void sgd_update(double* w, const double* g, double* v, int64_t n, double lr,
                double momentum, double wd);
}  // namespace avx2
#endif  // ST3D_X86

}  // namespace st3d::kernels
