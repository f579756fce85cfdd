#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "st3d/gradcheck.hpp"
#include "st3d/layers.hpp"

using namespace st3d;
using nn::Mode;

TEST_CASE("conv3d identity kernel") {
  nn::Conv3d<float> conv(1, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
  conv.weight[0] = 1.0f;
  Rng rng(2);
  auto x = oracle::random_tensor<float>({2, 1, 3, 4, 5}, rng);
  auto y = conv.forward(x, Mode::train);
  CHECK(y.shape() == x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);

  // Identity kernel backward: grad_input equals grad_out.
  auto g = oracle::random_tensor<float>(y.shape(), rng);
  auto gx = conv.backward(g);
  for (int64_t i = 0; i < g.numel(); ++i) CHECK(gx[i] == g[i]);
}

TEST_CASE("conv3d all-ones kernel sums the padded neighborhood") {
  nn::Conv3d<float> conv(1, 1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
  for (auto& w : conv.weight) w = 1.0f;
  auto x = Tensor<float>::full({1, 1, 2, 2, 2}, 1.0f);
  auto y = conv.forward(x, Mode::eval);
  CHECK(y.shape() == Shape{1, 1, 2, 2, 2});
  for (int64_t i = 0; i < y.numel(); ++i)
    CHECK(y[i] == doctest::Approx(8.0f));  // the 2x2x2 cube fits every window
}

TEST_CASE("conv1 on the full input produces the documented shape") {
  nn::Conv3d<float> conv(3, 64, {7, 7, 7}, {1, 2, 2}, {3, 3, 3});
  CHECK(conv.output_shape({2, 3, 16, 112, 112}) ==
        Shape{2, 64, 16, 56, 56});
  CHECK(conv.param_count() == 64 * 3 * 343);
}

TEST_CASE("conv3d errors") {
  nn::Conv3d<float> conv(2, 3, {3, 3, 3}, {1, 1, 1}, {0, 0, 0});
  CHECK_THROWS_WITH_AS(conv.forward(Tensor<float>({1, 1, 4, 4, 4}), Mode::eval),
                       doctest::Contains("channels"), Error);
  CHECK_THROWS_AS(conv.output_shape({1, 2, 2, 4, 4}), Error);  // T' < 1
  CHECK_THROWS_AS(conv.backward(Tensor<float>({1, 3, 2, 2, 2})), Error);
}

TEST_CASE("conv3d zero grad_out gives zero gradients") {
  Rng rng(4);
  nn::Conv3d<float> conv(2, 2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
  conv.init(rng);
  auto x = oracle::random_tensor<float>({1, 2, 3, 3, 3}, rng);
  auto y = conv.forward(x, Mode::train);
  auto gx = conv.backward(Tensor<float>(y.shape()));
  for (auto v : gx) CHECK(v == 0.0f);
  for (auto v : conv.grad_weight) CHECK(v == 0.0f);
}

TEST_CASE("conv3d linearity in the input") {
  Rng rng(6);
  nn::Conv3d<double> conv(2, 3, {3, 3, 3}, {1, 2, 2}, {1, 1, 1});
  conv.init(rng);
  auto x = oracle::random_tensor<double>({2, 2, 4, 6, 6}, rng);
  auto y = oracle::random_tensor<double>({2, 2, 4, 6, 6}, rng);
  const double alpha = 0.7, beta = -1.3;

  Tensor<double> mix(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) mix[i] = alpha * x[i] + beta * y[i];
  auto lhs = conv.forward(mix, Mode::eval);
  auto cx = conv.forward(x, Mode::eval);
  auto cy = conv.forward(y, Mode::eval);
  for (int64_t i = 0; i < lhs.numel(); ++i)
    CHECK(lhs[i] ==
          doctest::Approx(alpha * cx[i] + beta * cy[i]).epsilon(1e-10));
}

TEST_CASE("batchnorm constant input returns beta") {
  nn::BatchNorm3d<float> bn(2);
  auto x = Tensor<float>::full({2, 2, 2, 2, 2}, 3.25f);
  auto y = bn.forward(x, Mode::train);
  for (auto v : y) CHECK(v == 0.0f);  // gamma=1, beta=0, zero numerator

  bn.beta[0] = 1.5f;
  bn.beta[1] = -2.0f;
  auto y2 = bn.forward(x, Mode::train);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 2; ++c)
      for (int64_t i = 0; i < 8; ++i)
        CHECK(y2[(n * 2 + c) * 8 + i] == bn.beta[c]);
}

TEST_CASE("batchnorm two-value channel hits the closed form") {
  // Channel values {1,3}: mean 2, biased var 1, outputs -+1/sqrt(1+eps).
  nn::BatchNorm3d<double> bn(1, 1e-5);
  Tensor<double> x({2, 1, 1, 1, 1}, {1.0, 3.0});
  auto y = bn.forward(x, Mode::train);
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(y[0] == doctest::Approx(-expect).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(expect).epsilon(1e-12));

  // Running stats moved toward the batch by momentum 0.1.
  CHECK(bn.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
  CHECK(bn.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("batchnorm train output is normalized per channel") {
  Rng rng(8);
  nn::BatchNorm3d<double> bn(3);
  auto x = oracle::random_tensor<double>({4, 3, 2, 5, 5}, rng, -3.0, 5.0);
  auto y = bn.forward(x, Mode::train);
  const int64_t plane = 2 * 5 * 5, m = 4 * plane;
  for (int64_t c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < plane; ++i) mean += y[(n * 3 + c) * plane + i];
    mean /= m;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < plane; ++i) {
        const double d = y[(n * 3 + c) * plane + i] - mean;
        var += d * d;
      }
    var /= m;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("batchnorm eval mode is a per-channel affine map") {
  Rng rng(10);
  nn::BatchNorm3d<float> bn(2);
  for (auto& v : bn.gamma) v = 1.7f;
  for (auto& v : bn.running_mean) v = 0.4f;
  for (auto& v : bn.running_var) v = 2.0f;

  auto x = oracle::random_tensor<float>({1, 2, 2, 3, 3}, rng);
  auto y1 = bn.forward(x, Mode::eval);
  const float delta = 0.625f;
  Tensor<float> x2 = x;
  x2.at({0, 1, 1, 2, 0}) += delta;
  auto y2 = bn.forward(x2, Mode::eval);

  const float scale = 1.7f / std::sqrt(2.0f + 1e-5f);
  for (int64_t i = 0; i < y1.numel(); ++i) {
    const float diff = y2[i] - y1[i];
    if (i == x.offset(std::array<int64_t, 5>{0, 1, 1, 2, 0})) {
      CHECK(diff == doctest::Approx(scale * delta).epsilon(1e-4));
    } else {
      CHECK(diff == 0.0f);
    }
  }
}

TEST_CASE("batchnorm rejects single-element channels in train mode") {
  nn::BatchNorm3d<float> bn(2);
  CHECK_THROWS_AS(bn.forward(Tensor<float>({1, 2, 1, 1, 1}), Mode::train),
                  Error);
  CHECK_NOTHROW(bn.forward(Tensor<float>({1, 2, 1, 1, 1}), Mode::eval));
}

TEST_CASE("relu examples") {
  nn::Relu<float> relu;
  Tensor<float> x({3}, {-1.0f, 0.0f, 2.0f});
  auto y = relu.forward(x, Mode::train);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);

  Tensor<float> g({3}, {5.0f, 7.0f, 9.0f});
  auto gx = relu.backward(g);
  CHECK(gx[0] == 0.0f);
  CHECK(gx[1] == 0.0f);  // gradient at exactly 0 is 0
  CHECK(gx[2] == 9.0f);
}

TEST_CASE("maxpool examples") {
  nn::MaxPool3d<float> pool({2, 2, 2}, {2, 2, 2}, {0, 0, 0});
  Tensor<float> x({1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto y = pool.forward(x, Mode::train);
  CHECK(y.shape() == Shape{1, 1, 1, 1, 1});
  CHECK(y[0] == 8.0f);

  // Constant input stays constant.
  auto c = Tensor<float>::full({1, 2, 4, 4, 4}, 2.5f);
  nn::MaxPool3d<float> pool3({3, 3, 3}, {2, 2, 2}, {1, 1, 1});
  auto yc = pool3.forward(c, Mode::eval);
  for (auto v : yc) CHECK(v == 2.5f);

  // The paper's pool: (N,64,16,56,56) -> (N,64,8,28,28).
  CHECK(pool3.output_shape({2, 64, 16, 56, 56}) == Shape{2, 64, 8, 28, 28});

  CHECK_THROWS_AS(nn::MaxPool3d<float>({0, 2, 2}, {1, 1, 1}, {0, 0, 0}), Error);
}

TEST_CASE("maxpool backward conserves mass on non-overlapping windows") {
  Rng rng(12);
  nn::MaxPool3d<float> pool({2, 2, 2}, {2, 2, 2}, {0, 0, 0});
  auto x = oracle::random_tensor<float>({2, 2, 4, 4, 4}, rng);
  auto y = pool.forward(x, Mode::train);
  auto g = oracle::random_tensor<float>(y.shape(), rng);
  auto gx = pool.backward(g);
  double sum_in = 0, sum_out = 0;
  for (auto v : gx) sum_in += v;
  for (auto v : g) sum_out += v;
  CHECK(sum_in == doctest::Approx(sum_out).epsilon(1e-6));
}

TEST_CASE("global average pool examples") {
  nn::GlobalAvgPool<float> pool;
  auto ones = Tensor<float>::full({1, 2, 2, 2, 2}, 1.0f);
  auto y = pool.forward(ones, Mode::eval);
  CHECK(y.shape() == Shape{1, 2});
  CHECK(y[0] == 1.0f);
  CHECK(y[1] == 1.0f);

  Tensor<float> seq({1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(pool.forward(seq, Mode::eval)[0] == doctest::Approx(4.5f));

  // Backward spreads grad / (T*H*W).
  pool.forward(seq, Mode::train);
  Tensor<float> g({1, 1}, {8.0f});
  auto gx = pool.backward(g);
  for (auto v : gx) CHECK(v == 1.0f);
}

TEST_CASE("fully connected examples") {
  nn::FullyConnected<float> fc(2, 2);
  fc.weight = Tensor<float>({2, 2}, {1, 0, 0, 1});
  Tensor<float> x({1, 2}, {3.0f, 4.0f});
  auto y = fc.forward(x, Mode::eval);
  CHECK(y[0] == 3.0f);
  CHECK(y[1] == 4.0f);

  nn::FullyConnected<float> scalar(1, 1);
  scalar.weight[0] = 2.0f;
  scalar.bias[0] = 1.0f;
  CHECK(scalar.forward(Tensor<float>({1, 1}, {3.0f}), Mode::eval)[0] == 7.0f);

  CHECK_THROWS_AS(fc.forward(Tensor<float>({1, 3}), Mode::eval), Error);
}

TEST_CASE("softmax cross entropy examples") {
  // Uniform logits over 400 classes: loss = ln 400.
  Tensor<double> uniform({2, 400});
  auto r = nn::softmax_cross_entropy(uniform, {7, 123});
  CHECK(r.loss == doctest::Approx(std::log(400.0)).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(5.991464547).epsilon(1e-9));

  // logits [2,0], label 0: loss = ln(1 + e^-2).
  Tensor<double> two({1, 2}, {2.0, 0.0});
  auto r2 = nn::softmax_cross_entropy(two, {0});
  CHECK(r2.loss == doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-12));

  // Rows sum to 1 under huge logits (stability).
  Rng rng(14);
  Tensor<double> big({4, 8});
  for (auto& v : big) v = (rng.uniform() * 2 - 1) * 1e4;
  auto r3 = nn::softmax_cross_entropy(big, {0, 1, 2, 3});
  for (int64_t n = 0; n < 4; ++n) {
    double s = 0;
    for (int64_t k = 0; k < 8; ++k) s += r3.probs.at({n, k});
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(std::isfinite(r3.loss));

  // Gradient is (p - onehot)/N.
  auto g = nn::softmax_cross_entropy(two, {0});
  CHECK(g.grad_logits[0] == doctest::Approx(g.probs[0] - 1.0));
  CHECK(g.grad_logits[1] == doctest::Approx(g.probs[1]));

  CHECK_THROWS_AS(nn::softmax_cross_entropy(two, {2}), Error);
  CHECK_THROWS_AS(nn::softmax_cross_entropy(two, {-1}), Error);
}

TEST_CASE("backward before forward is rejected everywhere") {
  Tensor<float> g({1, 2, 2, 2, 2});
  CHECK_THROWS_AS(nn::BatchNorm3d<float>(2).backward(g), Error);
  CHECK_THROWS_AS(nn::Relu<float>().backward(g), Error);
  CHECK_THROWS_AS(nn::GlobalAvgPool<float>().backward(Tensor<float>({1, 2})),
                  Error);
  nn::MaxPool3d<float> pool({2, 2, 2}, {2, 2, 2}, {0, 0, 0});
  CHECK_THROWS_AS(pool.backward(g), Error);
}

TEST_CASE("gradcheck suite passes for every layer type") {
  gradcheck::Options opts;
  const auto results = gradcheck::run_all(opts);
  CHECK(results.size() == 8);
  for (const auto& r : results) {
    INFO(r.layer, " err=", r.max_rel_err);
    CHECK(r.pass);
    CHECK(r.max_rel_err < r.tol);
  }
}

TEST_CASE("gradcheck negative control names conv3d") {
  gradcheck::Options opts;
  opts.corrupt_conv_backward = true;
  const auto results = gradcheck::run_all(opts);
  bool conv_failed = false;
  for (const auto& r : results)
    if (r.layer == "conv3d" && !r.pass) conv_failed = true;
  CHECK(conv_failed);
  CHECK(!gradcheck::all_passed(results));
  CHECK(gradcheck::format_report(results).find("[FAIL] conv3d") !=
        std::string::npos);
}

TEST_CASE("gradcheck report is deterministic for a fixed seed") {
  gradcheck::Options opts;
  opts.seed = 77;
  const auto a = gradcheck::format_report(gradcheck::run_all(opts));
  const auto b = gradcheck::format_report(gradcheck::run_all(opts));
  CHECK(a == b);
}
