// Scalar-vs-AVX2 kernel equivalence. Elementwise kernels must agree
// bitwise; reductions and gemm use FMA and vector accumulators, so they get
// a tight tolerance scaled to the reduction length.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "st3d/kernels.hpp"
#include "st3d/rng.hpp"

using namespace st3d;
namespace gk = kernels::generic;

namespace {

template <typename T>
std::vector<T> random_vec(int64_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(static_cast<size_t>(n));
  for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return v;
}

template <typename T>
double max_abs_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
  return worst;
}

template <typename T>
double rel_tol(int64_t k) {
  const double eps = std::is_same_v<T, float> ? 1e-6 : 1e-14;
  return eps * std::sqrt(static_cast<double>(std::max<int64_t>(k, 1)));
}

}  // namespace

#if ST3D_X86

namespace ak = kernels::avx2;

TEST_CASE("avx2 available on this host or tests are vacuous") {
  // The remaining cases guard on cpu_has_avx2 themselves.
  CHECK(true);
}

TEST_CASE_TEMPLATE("elementwise kernels match scalar bitwise", T, float, double) {
  if (!kernels::cpu_has_avx2()) return;
  Rng rng(7);
  for (int64_t n : {1, 7, 8, 9, 64, 257}) {
    auto a = random_vec<T>(n, rng);
    auto b = random_vec<T>(n, rng);
    std::vector<T> got(a.size()), want(a.size());

    ak::add(got.data(), a.data(), b.data(), n);
    gk::add(want.data(), a.data(), b.data(), n);
    CHECK(got == want);

    ak::sub(got.data(), a.data(), b.data(), n);
    gk::sub(want.data(), a.data(), b.data(), n);
    CHECK(got == want);

    ak::mul(got.data(), a.data(), b.data(), n);
    gk::mul(want.data(), a.data(), b.data(), n);
    CHECK(got == want);

    ak::scale(got.data(), a.data(), T(1.5), n);
    gk::scale(want.data(), a.data(), T(1.5), n);
    CHECK(got == want);

    ak::fill(got.data(), T(0.25), n);
    gk::fill(want.data(), T(0.25), n);
    CHECK(got == want);

    ak::relu_fwd(got.data(), a.data(), n);
    gk::relu_fwd(want.data(), a.data(), n);
    CHECK(got == want);

    ak::relu_bwd(got.data(), a.data(), b.data(), n);
    gk::relu_bwd(want.data(), a.data(), b.data(), n);
    CHECK(got == want);
  }
}

TEST_CASE_TEMPLATE("axpy, affine, sgd, bn apply match within ulps", T, float,
                   double) {
  if (!kernels::cpu_has_avx2()) return;
  Rng rng(11);
  for (int64_t n : {1, 8, 33, 255}) {
    auto x = random_vec<T>(n, rng);
    auto y0 = random_vec<T>(n, rng);
    const double tol = rel_tol<T>(1) * 4;

    auto ya = y0, yg = y0;
    ak::axpy(ya.data(), T(0.7), x.data(), n);
    gk::axpy(yg.data(), T(0.7), x.data(), n);
    CHECK(max_abs_diff(ya, yg) <= tol);

    std::vector<T> oa(x.size()), og(x.size());
    ak::affine(oa.data(), x.data(), T(1.3), T(-0.2), n);
    gk::affine(og.data(), x.data(), T(1.3), T(-0.2), n);
    CHECK(max_abs_diff(oa, og) <= tol);

    ak::norm_affine(oa.data(), x.data(), T(0.4), T(1.3), T(-0.2), n);
    gk::norm_affine(og.data(), x.data(), T(0.4), T(1.3), T(-0.2), n);
    CHECK(max_abs_diff(oa, og) <= tol);

    ak::bn_bwd_apply(oa.data(), x.data(), y0.data(), T(0.1), T(0.9), T(-0.3),
                     T(0.05), n);
    gk::bn_bwd_apply(og.data(), x.data(), y0.data(), T(0.1), T(0.9), T(-0.3),
                     T(0.05), n);
    CHECK(max_abs_diff(oa, og) <= tol);

    auto w = random_vec<T>(n, rng), g = random_vec<T>(n, rng);
    auto v = random_vec<T>(n, rng, -0.1, 0.1);
    auto wa = w, va = v, wg = w, vg = v;
    ak::sgd_update(wa.data(), g.data(), va.data(), n, T(0.1), T(0.9), T(0.001));
    gk::sgd_update(wg.data(), g.data(), vg.data(), n, T(0.1), T(0.9), T(0.001));
    CHECK(max_abs_diff(wa, wg) <= tol);
    CHECK(max_abs_diff(va, vg) <= tol);
  }
}

TEST_CASE_TEMPLATE("reduction kernels match within accumulation tolerance", T,
                   float, double) {
  if (!kernels::cpu_has_avx2()) return;
  Rng rng(13);
  for (int64_t n : {1, 9, 64, 1000}) {
    auto x = random_vec<T>(n, rng);
    auto y = random_vec<T>(n, rng);
    const double tol = rel_tol<T>(n) * 8;

    CHECK(std::abs(double(ak::sum(x.data(), n)) - double(gk::sum(x.data(), n))) <=
          tol * n);
    CHECK(std::abs(double(ak::sq_diff_sum(x.data(), T(0.2), n)) -
                   double(gk::sq_diff_sum(x.data(), T(0.2), n))) <= tol * n);

    T a1, b1, a2, b2;
    ak::sum2(x.data(), y.data(), T(0.1), n, &a1, &b1);
    gk::sum2(x.data(), y.data(), T(0.1), n, &a2, &b2);
    CHECK(std::abs(double(a1) - double(a2)) <= tol * n);
    CHECK(std::abs(double(b1) - double(b2)) <= tol * n);
  }
}

TEST_CASE_TEMPLATE("gemm variants match scalar reference", T, float, double) {
  if (!kernels::cpu_has_avx2()) return;
  Rng rng(17);
  struct Case {
    int64_t m, n, k;
  };
  for (const Case& c : {Case{1, 1, 1}, Case{3, 5, 7}, Case{8, 16, 32},
                        Case{13, 9, 21}, Case{32, 48, 64}}) {
    const double tol = rel_tol<T>(c.k) * 16;

    for (int form = 0; form < 3; ++form) {
      // Row-major buffers sized for each operand layout.
      const int64_t a_rows = form == 2 ? c.k : c.m;
      const int64_t a_cols = form == 2 ? c.m : c.k;
      const int64_t b_rows = form == 1 ? c.n : c.k;
      const int64_t b_cols = form == 1 ? c.k : c.n;
      auto a = random_vec<T>(a_rows * a_cols, rng);
      auto b = random_vec<T>(b_rows * b_cols, rng);
      auto c0 = random_vec<T>(c.m * c.n, rng);

      for (T beta : {T(0), T(1)}) {
        auto got = c0, want = c0;
        auto run = [&](auto fn, std::vector<T>& out) {
          fn(c.m, c.n, c.k, T(0.9), a.data(), a_cols, b.data(), b_cols, beta,
             out.data(), c.n);
        };
        if (form == 0) {
          run([](auto... args) { ak::gemm_nn(args...); }, got);
          run([](auto... args) { gk::gemm_nn(args...); }, want);
        } else if (form == 1) {
          run([](auto... args) { ak::gemm_nt(args...); }, got);
          run([](auto... args) { gk::gemm_nt(args...); }, want);
        } else {
          run([](auto... args) { ak::gemm_tn(args...); }, got);
          run([](auto... args) { gk::gemm_tn(args...); }, want);
        }
        CHECK(max_abs_diff(got, want) <= tol * std::sqrt(double(c.k)));
      }
    }
  }
}

#endif  // ST3D_X86

TEST_CASE("dispatch honors forced isa") {
  kernels::set_isa(kernels::Isa::generic);
  CHECK(kernels::active_isa() == kernels::Isa::generic);
  kernels::reset_isa();
  if (kernels::cpu_has_avx2()) {
    kernels::set_isa(kernels::Isa::avx2);
    CHECK(kernels::active_isa() == kernels::Isa::avx2);
    kernels::reset_isa();
  }
}

TEST_CASE("threaded gemm equals single-thread result") {
  Rng rng(23);
  const int64_t m = 64, n = 48, k = 512;  // crosses the threading threshold
  auto a = random_vec<float>(m * k, rng);
  auto b = random_vec<float>(k * n, rng);
  std::vector<float> c1(m * n), c4(m * n);

  kernels::set_num_threads(1);
  kernels::gemm<float>(false, false, m, n, k, 1.0f, a.data(), k, b.data(), n,
                       0.0f, c1.data(), n);
  kernels::set_num_threads(4);
  kernels::gemm<float>(false, false, m, n, k, 1.0f, a.data(), k, b.data(), n,
                       0.0f, c4.data(), n);
  kernels::set_num_threads(1);
  CHECK(c1 == c4);  // row partitioning is exact
}
