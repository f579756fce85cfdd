#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "st3d/tensor_ops.hpp"

using namespace st3d;

TEST_CASE("elementwise examples") {
  Tensor<float> a({2}, {1.0f, 2.0f});
  Tensor<float> b({2}, {3.0f, 4.0f});
  auto sum = add(a, b);
  CHECK(sum[0] == 4.0f);
  CHECK(sum[1] == 6.0f);

  Tensor<float> c({2}, {1.0f, -2.0f});
  auto zeroed = scale(c, 0.0f);
  CHECK(zeroed[0] == 0.0f);
  CHECK(zeroed[1] == 0.0f);

  Tensor<float> d({3}, {-1.0f, 0.0f, 2.0f});
  auto r = elementwise(EwOp::relu, d);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 0.0f);
  CHECK(r[2] == 2.0f);
}

TEST_CASE("elementwise shape mismatch names both shapes") {
  Tensor<float> a({2, 3});
  Tensor<float> b({3, 2});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("(2,3)"), Error);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("(3,2)"), Error);
}

TEST_CASE("matmul examples") {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  Tensor<double> m({2, 2}, {1, 2, 3, 4});
  auto prod = matmul(eye, m);
  for (int64_t i = 0; i < 4; ++i) CHECK(prod[i] == m[i]);

  Tensor<double> row({1, 2}, {1, 2});
  Tensor<double> col({2, 1}, {3, 4});
  CHECK(matmul(row, col)[0] == doctest::Approx(11).epsilon(1e-12));

  CHECK_THROWS_AS(matmul(row, row), Error);
}

TEST_CASE("matmul matches triple-loop oracle on random 5x7 by 7x3") {
  Rng rng(42);
  auto a = oracle::random_tensor<double>({5, 7}, rng);
  auto b = oracle::random_tensor<double>({7, 3}, rng);
  auto got = matmul(a, b);
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 3; ++j) {
      double want = 0;
      for (int64_t k = 0; k < 7; ++k) want += a.at({i, k}) * b.at({k, j});
      CHECK(got.at({i, j}) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("matmul associativity within tolerance") {
  Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    auto a = oracle::random_tensor<double>({4, 6}, rng);
    auto b = oracle::random_tensor<double>({6, 3}, rng);
    auto c = oracle::random_tensor<double>({3, 5}, rng);
    auto left = matmul(matmul(a, b), c);
    auto right = matmul(a, matmul(b, c));
    for (int64_t i = 0; i < left.numel(); ++i)
      CHECK(left[i] == doctest::Approx(right[i]).epsilon(1e-12));

    auto af = oracle::random_tensor<float>({4, 6}, rng);
    auto bf = oracle::random_tensor<float>({6, 3}, rng);
    auto cf = oracle::random_tensor<float>({3, 5}, rng);
    auto lf = matmul(matmul(af, bf), cf);
    auto rf = matmul(af, matmul(bf, cf));
    for (int64_t i = 0; i < lf.numel(); ++i)
      CHECK(double(lf[i]) == doctest::Approx(double(rf[i])).epsilon(1e-5));
  }
}

TEST_CASE("reduce examples and invariants") {
  auto ones = Tensor<float>::full({2, 3}, 1.0f);
  auto total = reduce(ones, {0, 1}, ReduceKind::sum);
  CHECK(total.shape() == Shape{1});
  CHECK(total[0] == 6.0f);

  Tensor<float> m({2, 2}, {1, 3, 2, 4});
  auto mean0 = reduce(m, {0}, ReduceKind::mean);
  CHECK(mean0.shape() == Shape{2});
  CHECK(mean0[0] == doctest::Approx(1.5));
  CHECK(mean0[1] == doctest::Approx(3.5));

  Tensor<float> ties({3}, {5, 5, 1});
  auto mx = reduce_max(ties, {0});
  CHECK(mx.values[0] == 5.0f);
  CHECK(mx.indices[0] == 0);  // first maximizer

  CHECK_THROWS_AS(reduce(m, {}, ReduceKind::sum), Error);
  CHECK_THROWS_AS(reduce(m, {0, 0}, ReduceKind::sum), Error);

  // reduce(sum) over all axes equals the sequential buffer sum.
  Rng rng(3);
  auto t = oracle::random_tensor<float>({3, 4, 5}, rng);
  double seq = 0;
  for (int64_t i = 0; i < t.numel(); ++i) seq += t[i];
  CHECK(double(reduce(t, {0, 1, 2}, ReduceKind::sum)[0]) ==
        doctest::Approx(seq).epsilon(1e-6));
}

TEST_CASE("pad_and_slice examples") {
  Tensor<float> v({2}, {1, 2});
  auto padded = pad_and_slice(v, {{1, 1}}, {1});
  CHECK(padded.shape() == Shape{4});
  CHECK(padded[0] == 0.0f);
  CHECK(padded[1] == 1.0f);
  CHECK(padded[2] == 2.0f);
  CHECK(padded[3] == 0.0f);

  Tensor<float> r({5}, {0, 1, 2, 3, 4});
  auto sampled = pad_and_slice(r, {{0, 0}}, {2});
  CHECK(sampled.shape() == Shape{3});
  CHECK(sampled[0] == 0.0f);
  CHECK(sampled[1] == 2.0f);
  CHECK(sampled[2] == 4.0f);

  // pad (1,0) then step 2 on [1,2,3]: padded [0,1,2,3] -> [0,2].
  Tensor<float> w({3}, {1, 2, 3});
  auto both = pad_and_slice(w, {{1, 0}}, {2});
  CHECK(both.shape() == Shape{2});
  CHECK(both[0] == 0.0f);
  CHECK(both[1] == 2.0f);
}

TEST_CASE("pad_and_slice identity and transpose property") {
  Rng rng(9);
  auto t = oracle::random_tensor<float>({3, 4, 5}, rng);
  auto same = pad_and_slice(t, {{0, 0}, {0, 0}, {0, 0}}, {1, 1, 1});
  CHECK(same.shape() == t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(same[i] == t[i]);

  // <pad_and_slice(x), y> == <x, pad_and_slice_backward(y)> for random y.
  const std::vector<std::pair<int64_t, int64_t>> pads{{1, 0}, {0, 2}, {1, 1}};
  const std::vector<int64_t> steps{2, 1, 3};
  auto fwd = pad_and_slice(t, pads, steps);
  auto y = oracle::random_tensor<float>(fwd.shape(), rng);
  auto bwd = pad_and_slice_backward(y, t.shape(), pads, steps);
  double lhs = 0, rhs = 0;
  for (int64_t i = 0; i < fwd.numel(); ++i) lhs += double(fwd[i]) * y[i];
  for (int64_t i = 0; i < t.numel(); ++i) rhs += double(t[i]) * bwd[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-5));
}

TEST_CASE("row-major offset round trip") {
  Tensor<float> t({3, 4, 5});
  const auto& shape = t.shape();
  for (int64_t flat = 0; flat < t.numel(); ++flat) {
    const auto idx = unravel(flat, shape);
    CHECK(t.offset({idx.data(), idx.size()}) == flat);
  }
  CHECK_THROWS_AS(t.at({3, 0, 0}), Error);
  CHECK_THROWS_AS(t.at({0, -1, 0}), Error);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor<float>({0, 2}), Error);
  CHECK_THROWS_AS(Tensor<float>(Shape{}), Error);
  CHECK_THROWS_AS(Tensor<float>({2}, {1.0f}), Error);
  Tensor<float> t({2, 2});
  CHECK(t.numel() == 4);
  CHECK(t.strides() == Shape{2, 1});
}

TEST_CASE("init_weights statistics and determinism") {
  Rng rng(100);
  auto small = init_weights<double>({10000}, 1000000, rng);
  double mean = 0;
  for (auto v : small) mean += v;
  mean /= small.numel();
  double var = 0;
  for (auto v : small) var += (v - mean) * (v - mean);
  var /= small.numel();
  // 3 standard errors of the sample variance of a Gaussian.
  const double target = 2e-6;
  const double se = target * std::sqrt(2.0 / (small.numel() - 1));
  CHECK(std::abs(var - target) < 3 * se);

  Rng rng2(100);
  auto again = init_weights<double>({10000}, 1000000, rng2);
  for (int64_t i = 0; i < small.numel(); ++i) CHECK(small[i] == again[i]);

  Rng rng3(4);
  auto big = init_weights<double>({100000}, 2, rng3);
  double bmean = 0;
  for (auto v : big) bmean += v;
  bmean /= big.numel();
  double bvar = 0;
  for (auto v : big) bvar += (v - bmean) * (v - bmean);
  bvar /= big.numel();
  CHECK(bvar == doctest::Approx(1.0).epsilon(0.05));

  CHECK_THROWS_AS(init_weights<float>({4}, 0, rng3), Error);
}

TEST_CASE("rng basic contracts") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int64_t k = rng.uniform_int(7);
    CHECK(k >= 0);
    CHECK(k < 7);
  }
  // State round trip continues the identical stream.
  const std::string blob = rng.serialize();
  const double next = rng.uniform();
  Rng restored(999);
  restored.deserialize(blob);
  CHECK(restored.uniform() == next);
}

TEST_CASE("tensor binary format round trip") {
  Rng rng(21);
  auto t = oracle::random_tensor<float>({2, 3, 4}, rng);
  std::stringstream buf;
  write_tensor(buf, t);

  // Magic, rank u32 LE, extents u64 LE, dtype code, payload.
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "STT1");
  CHECK(static_cast<unsigned char>(bytes[4]) == 3);
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);
  CHECK(static_cast<unsigned char>(bytes[4 + 4 + 24]) == 0);  // dtype f32
  CHECK(bytes.size() == 4 + 4 + 3 * 8 + 1 + size_t(t.numel()) * 4);

  auto back = read_tensor<float>(buf);
  CHECK(back.shape() == t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);

  // f64 payload refuses to load as f32.
  auto d = oracle::random_tensor<double>({2, 2}, rng);
  std::stringstream dbuf;
  write_tensor(dbuf, d);
  CHECK_THROWS_WITH_AS(read_tensor<float>(dbuf), doctest::Contains("dtype"),
                       Error);

  std::stringstream junk("not a tensor");
  CHECK_THROWS_AS(read_tensor<float>(junk), Error);
}
