// The engine lowers conv3d through im2col + gemm; the direct 7-loop sum
// here is the independent route it must match.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "st3d/layers.hpp"

using namespace st3d;

namespace {

struct ConvCase {
  int64_t N, C, O;
  std::array<int64_t, 3> in_dims;  // (T, H, W)
  std::array<int64_t, 3> kernel, stride, pad;
};

ConvCase random_case(Rng& rng) {
  ConvCase c;
  c.N = 1 + rng.uniform_int(2);
  c.C = 1 + rng.uniform_int(3);
  c.O = 1 + rng.uniform_int(4);
  const int64_t strides[] = {1, 2};
  const int64_t pads[] = {0, 1, 3};
  for (int i = 0; i < 3; ++i) {
    c.kernel[i] = 1 + rng.uniform_int(3);  // 1..3
    c.stride[i] = strides[rng.uniform_int(2)];
    c.pad[i] = pads[rng.uniform_int(3)];
    // Keep the output extent positive.
    int64_t in = 2 + rng.uniform_int(7);  // 2..8
    while (in + 2 * c.pad[i] < c.kernel[i]) in++;
    c.in_dims[i] = in;
  }
  return c;
}

template <typename T>
double compare_case(const ConvCase& c, Rng& rng) {
  nn::Conv3d<T> conv(c.C, c.O, c.kernel, c.stride, c.pad);
  conv.weight = oracle::random_tensor<T>(conv.weight.shape(), rng);
  auto x = oracle::random_tensor<T>(
      {c.N, c.C, c.in_dims[0], c.in_dims[1], c.in_dims[2]}, rng);

  auto got = conv.forward(x, nn::Mode::eval);
  auto want = oracle::conv3d_direct(x, conv.weight, c.stride, c.pad);
  REQUIRE(got.shape() == want.shape());

  double worst = 0.0;
  for (int64_t i = 0; i < got.numel(); ++i) {
    const double a = got[i], b = want[i];
    worst = std::max(worst,
                     std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}));
  }
  return worst;
}

}  // namespace

TEST_CASE("im2col conv equals the direct 7-loop sum on 50 random cases (f64)") {
  Rng rng(2024);
  for (int rep = 0; rep < 50; ++rep) {
    const ConvCase c = random_case(rng);
    INFO("case ", rep, ": N=", c.N, " C=", c.C, " O=", c.O, " in=",
         c.in_dims[0], "x", c.in_dims[1], "x", c.in_dims[2]);
    CHECK(compare_case<double>(c, rng) < 1e-10);
  }
}

TEST_CASE("im2col conv equals the direct sum in float32") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const ConvCase c = random_case(rng);
    CHECK(compare_case<float>(c, rng) < 1e-5);
  }
}

TEST_CASE("direct-sum spot check of the all-ones cube") {
  // Cross-checks the oracle itself on a hand-computable case.
  auto x = Tensor<double>::full({1, 1, 2, 2, 2}, 1.0);
  auto w = Tensor<double>::full({1, 1, 3, 3, 3}, 1.0);
  auto y = oracle::conv3d_direct(x, w, {1, 1, 1}, {1, 1, 1});
  CHECK(y.shape() == Shape{1, 1, 2, 2, 2});
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 8.0);
}
