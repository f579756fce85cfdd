#include "st3d/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <thread>
#include <vector>

namespace st3d::kernels {

namespace {

template <typename T>
KernelTable<T> make_generic_table() {
  KernelTable<T> t;
  t.gemm_nn = &generic::gemm_nn<T>;
  t.gemm_nt = &generic::gemm_nt<T>;
  t.gemm_tn = &generic::gemm_tn<T>;
  t.add = &generic::add<T>;
  t.sub = &generic::sub<T>;
  t.mul = &generic::mul<T>;
  t.scale = &generic::scale<T>;
  t.axpy = &generic::axpy<T>;
  t.fill = &generic::fill<T>;
  t.relu_fwd = &generic::relu_fwd<T>;
  t.relu_bwd = &generic::relu_bwd<T>;
  t.sum = &generic::sum<T>;
  t.sq_diff_sum = &generic::sq_diff_sum<T>;
  t.sum2 = &generic::sum2<T>;
  t.affine = &generic::affine<T>;
  t.norm_affine = &generic::norm_affine<T>;
  t.bn_bwd_apply = &generic::bn_bwd_apply<T>;
  t.sgd_update = &generic::sgd_update<T>;
  return t;
}

#if ST3D_X86
template <typename T>
KernelTable<T> make_avx2_table() {
  KernelTable<T> t;
  t.gemm_nn = static_cast<typename KernelTable<T>::GemmFn>(&avx2::gemm_nn);
  t.gemm_nt = static_cast<typename KernelTable<T>::GemmFn>(&avx2::gemm_nt);
  t.gemm_tn = static_cast<typename KernelTable<T>::GemmFn>(&avx2::gemm_tn);
  t.add = static_cast<void (*)(T*, const T*, const T*, int64_t)>(&avx2::add);
  t.sub = static_cast<void (*)(T*, const T*, const T*, int64_t)>(&avx2::sub);
  t.mul = static_cast<void (*)(T*, const T*, const T*, int64_t)>(&avx2::mul);
  t.scale = static_cast<void (*)(T*, const T*, T, int64_t)>(&avx2::scale);
  t.axpy = static_cast<void (*)(T*, T, const T*, int64_t)>(&avx2::axpy);
  t.fill = static_cast<void (*)(T*, T, int64_t)>(&avx2::fill);
  t.relu_fwd =
      static_cast<void (*)(T*, const T*, int64_t)>(&avx2::relu_fwd);
  t.relu_bwd = static_cast<void (*)(T*, const T*, const T*, int64_t)>(
      &avx2::relu_bwd);
  t.sum = static_cast<T (*)(const T*, int64_t)>(&avx2::sum);
  t.sq_diff_sum =
      static_cast<T (*)(const T*, T, int64_t)>(&avx2::sq_diff_sum);
  t.sum2 = static_cast<void (*)(const T*, const T*, T, int64_t, T*, T*)>(
      &avx2::sum2);
  t.affine =
      static_cast<void (*)(T*, const T*, T, T, int64_t)>(&avx2::affine);
  t.norm_affine = static_cast<void (*)(T*, const T*, T, T, T, int64_t)>(
      &avx2::norm_affine);
  t.bn_bwd_apply =
      static_cast<void (*)(T*, const T*, const T*, T, T, T, T, int64_t)>(
          &avx2::bn_bwd_apply);
  t.sgd_update = static_cast<void (*)(T*, const T*, T*, int64_t, T, T, T)>(
      &avx2::sgd_update);
  return t;
}
#endif

Isa detect_isa() {
  if (const char* env = std::getenv("ST3D_ISA")) {
    if (std::strcmp(env, "generic") == 0) return Isa::generic;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Isa::avx2;
    return Isa::generic;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::generic;
}

struct State {
  Isa isa;
  KernelTable<float> f32;
  KernelTable<double> f64;
  int threads = 1;

  State() { apply(detect_isa()); }

  void apply(Isa which) {
    isa = which;
#if ST3D_X86
    if (which == Isa::avx2) {
      f32 = make_avx2_table<float>();
      f64 = make_avx2_table<double>();
      return;
    }
#endif
    f32 = make_generic_table<float>();
    f64 = make_generic_table<double>();
  }
};

State& state() {
  static State s;
  return s;
}

}  // namespace

bool cpu_has_avx2() {
#if ST3D_X86
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return state().isa; }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && !cpu_has_avx2())
    throw std::runtime_error("kernels: avx2 requested but not supported by this CPU");
  state().apply(isa);
}

void reset_isa() { state().apply(detect_isa()); }

const KernelTable<float>& table_f32() { return state().f32; }
const KernelTable<double>& table_f64() { return state().f64; }

template <>
const KernelTable<float>& table<float>() {
  return state().f32;
}
template <>
const KernelTable<double>& table<double>() {
  return state().f64;
}

int num_threads() { return state().threads; }

void set_num_threads(int n) { state().threads = std::max(1, n); }

template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          T alpha, const T* a, int64_t lda, const T* b, int64_t ldb, T beta,
          T* c, int64_t ldc) {
  if (trans_a && trans_b)
    throw std::runtime_error("gemm: transposed-transposed form is not used");
  const auto& tab = table<T>();
  typename KernelTable<T>::GemmFn fn =
      trans_a ? tab.gemm_tn : (trans_b ? tab.gemm_nt : tab.gemm_nn);

  const int nt = state().threads;
  // Rows of C are independent in every supported form, so a row partition
  // is exact: each row is produced by one worker in the sequential order.
  if (nt <= 1 || m < 2 * nt || m * n * k < (1 << 20)) {
    fn(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
  const int workers = static_cast<int>(std::min<int64_t>(nt, m));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int64_t chunk = (m + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int64_t row0 = w * chunk;
    const int64_t rows = std::min<int64_t>(chunk, m - row0);
    if (rows <= 0) break;
    // a's row origin shifts only in the non-transposed form; in tn the
    // output row indexes a column of A, handled inside via lda.
    const T* a_part = trans_a ? a + row0 : a + row0 * lda;
    T* c_part = c + row0 * ldc;
    pool.emplace_back([=]() {
      fn(rows, n, k, alpha, a_part, lda, b, ldb, beta, c_part, ldc);
    });
  }
  for (auto& th : pool) th.join();
}

template void gemm<float>(bool, bool, int64_t, int64_t, int64_t, float,
                          const float*, int64_t, const float*, int64_t,
                          float, float*, int64_t);
template void gemm<double>(bool, bool, int64_t, int64_t, int64_t, double,
                           const double*, int64_t, const double*, int64_t,
                           double, double*, int64_t);

}  // namespace st3d::kernels
