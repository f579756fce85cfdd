#include "st3d/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "st3d/layers.hpp"
#include "st3d/resnet3d.hpp"

namespace st3d::gradcheck {

namespace {

using nn::Mode;
using D = double;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

Tensor<D> random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                        double hi = 1.0) {
  Tensor<D> t(std::move(shape));
  for (auto& v : t) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Distinct values with gaps far above the FD step, for kinked ops (pooling).
Tensor<D> distinct_tensor(Shape shape, Rng& rng) {
  Tensor<D> t(std::move(shape));
  const int64_t n = t.numel();
  auto perm = rng.permutation(n);
  for (int64_t i = 0; i < n; ++i)
    t[i] = static_cast<double>(perm[i]) / static_cast<double>(n);
  return t;
}

// Central finite differences of loss() wrt every element of x, compared
// against the analytic gradient.
double fd_compare(Tensor<D>& x, const Tensor<D>& analytic,
                  const std::function<double()>& loss, double h) {
  double worst = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  return worst;
}

// Fixed random projection of a tensor; gives every output element a
// well-scaled contribution to a scalar loss.
struct Projection {
  Tensor<D> weights;
  explicit Projection(const Shape& shape, Rng& rng)
      : weights(random_tensor(shape, rng)) {}
  double apply(const Tensor<D>& y) const {
    double s = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) s += weights[i] * y[i];
    return s;
  }
};

Result check_conv3d(const Options& opts) {
  Rng rng(opts.seed);
  nn::Conv3d<D> conv(2, 3, {3, 3, 3}, {2, 2, 2}, {1, 1, 1}, /*with_bias=*/true);
  conv.init(rng);
  for (auto& v : conv.bias) v = rng.uniform() - 0.5;
  Tensor<D> x = random_tensor({2, 2, 3, 4, 4}, rng);

  Tensor<D> out = conv.forward(x, Mode::train);
  Projection proj(out.shape(), rng);
  Tensor<D> grad_in = conv.backward(proj.weights);
  Tensor<D> grad_w = conv.grad_weight;
  Tensor<D> grad_b = conv.grad_bias;
  if (opts.corrupt_conv_backward) grad_w[0] += 1e-2;

  auto loss = [&]() { return proj.apply(conv.forward(x, Mode::eval)); };
  double worst = fd_compare(x, grad_in, loss, opts.h);
  worst = std::max(worst, fd_compare(conv.weight, grad_w, loss, opts.h));
  worst = std::max(worst, fd_compare(conv.bias, grad_b, loss, opts.h));
  return {"conv3d", worst, opts.layer_tol, worst < opts.layer_tol};
}

Result check_batchnorm3d(const Options& opts) {
  Rng rng(opts.seed);
  nn::BatchNorm3d<D> bn(3);
  for (auto& v : bn.gamma) v = 0.5 + rng.uniform();
  for (auto& v : bn.beta) v = rng.uniform() - 0.5;
  Tensor<D> x = random_tensor({2, 3, 2, 2, 2}, rng);

  Tensor<D> out = bn.forward(x, Mode::train);
  Projection proj(out.shape(), rng);
  Tensor<D> grad_in = bn.backward(proj.weights);
  Tensor<D> grad_gamma = bn.grad_gamma;
  Tensor<D> grad_beta = bn.grad_beta;

  // Train-mode forward, so the FD path sees the same mean/variance coupling
  // the backward differentiates through.
  auto loss = [&]() { return proj.apply(bn.forward(x, Mode::train)); };
  double worst = fd_compare(x, grad_in, loss, opts.h);
  worst = std::max(worst, fd_compare(bn.gamma, grad_gamma, loss, opts.h));
  worst = std::max(worst, fd_compare(bn.beta, grad_beta, loss, opts.h));
  return {"batchnorm3d", worst, opts.layer_tol, worst < opts.layer_tol};
}

Result check_relu(const Options& opts) {
  Rng rng(opts.seed);
  // Away from the kink at 0.
  Tensor<D> x({4, 25});
  for (auto& v : x) {
    const double mag = 0.1 + 0.9 * rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  nn::Relu<D> relu;
  Tensor<D> out = relu.forward(x, Mode::train);
  Projection proj(out.shape(), rng);
  Tensor<D> grad_in = relu.backward(proj.weights);
  auto loss = [&]() { return proj.apply(relu.forward(x, Mode::eval)); };
  const double worst = fd_compare(x, grad_in, loss, opts.h);
  return {"relu", worst, opts.layer_tol, worst < opts.layer_tol};
}

Result check_maxpool3d(const Options& opts) {
  Rng rng(opts.seed);
  nn::MaxPool3d<D> pool({3, 3, 3}, {2, 2, 2}, {1, 1, 1});
  Tensor<D> x = distinct_tensor({2, 2, 4, 6, 6}, rng);
  Tensor<D> out = pool.forward(x, Mode::train);
  Projection proj(out.shape(), rng);
  Tensor<D> grad_in = pool.backward(proj.weights);
  auto loss = [&]() { return proj.apply(pool.forward(x, Mode::eval)); };
  const double worst = fd_compare(x, grad_in, loss, opts.h);
  return {"maxpool3d", worst, opts.layer_tol, worst < opts.layer_tol};
}

Result check_global_avgpool(const Options& opts) {
  Rng rng(opts.seed);
  nn::GlobalAvgPool<D> pool;
  Tensor<D> x = random_tensor({2, 3, 2, 3, 3}, rng);
  Tensor<D> out = pool.forward(x, Mode::train);
  Projection proj(out.shape(), rng);
  Tensor<D> grad_in = pool.backward(proj.weights);
  auto loss = [&]() { return proj.apply(pool.forward(x, Mode::eval)); };
  const double worst = fd_compare(x, grad_in, loss, opts.h);
  return {"global_avgpool", worst, opts.layer_tol, worst < opts.layer_tol};
}

Result check_fully_connected(const Options& opts) {
  Rng rng(opts.seed);
  nn::FullyConnected<D> fc(7, 5);
  fc.init(rng);
  for (auto& v : fc.bias) v = rng.uniform() - 0.5;
  Tensor<D> x = random_tensor({4, 7}, rng);
  Tensor<D> out = fc.forward(x, Mode::train);
  Projection proj(out.shape(), rng);
  Tensor<D> grad_in = fc.backward(proj.weights);
  Tensor<D> grad_w = fc.grad_weight;
  Tensor<D> grad_b = fc.grad_bias;
  auto loss = [&]() { return proj.apply(fc.forward(x, Mode::eval)); };
  double worst = fd_compare(x, grad_in, loss, opts.h);
  worst = std::max(worst, fd_compare(fc.weight, grad_w, loss, opts.h));
  worst = std::max(worst, fd_compare(fc.bias, grad_b, loss, opts.h));
  return {"fully_connected", worst, opts.layer_tol, worst < opts.layer_tol};
}

Result check_softmax_xent(const Options& opts) {
  Rng rng(opts.seed);
  Tensor<D> logits = random_tensor({4, 6}, rng, -2.0, 2.0);
  std::vector<int64_t> labels;
  for (int64_t n = 0; n < 4; ++n) labels.push_back(rng.uniform_int(6));

  auto res = nn::softmax_cross_entropy(logits, labels);
  // The loss is already scalar; grads are checked directly against it.
  Tensor<D> analytic = res.grad_logits;
  auto loss = [&]() {
    return static_cast<double>(nn::softmax_cross_entropy(logits, labels).loss);
  };
  const double worst = fd_compare(logits, analytic, loss, opts.h);
  return {"softmax_xent", worst, opts.layer_tol, worst < opts.layer_tol};
}

Result check_network(const Options& opts) {
  Rng rng(opts.seed);
  auto spec = resnet::ArchSpec::custom({1, 1, 1, 1}, {4, 8, 8, 8}, 3,
                                       {3, 4, 16, 16});
  resnet::Network<D> net(spec, rng);
  Tensor<D> batch = random_tensor({2, 3, 4, 16, 16}, rng);
  std::vector<int64_t> labels = {rng.uniform_int(3), rng.uniform_int(3)};

  auto loss_of = [&](Mode mode) {
    Tensor<D> logits = net.forward(batch, mode);
    return nn::softmax_cross_entropy(logits, labels);
  };

  auto res = loss_of(Mode::train);
  net.backward(res.grad_logits);

  auto params = net.params();
  // Copy the analytic gradients before the FD loop reruns forward.
  std::vector<Tensor<D>> grads;
  grads.reserve(params.size());
  int64_t total = 0;
  for (auto& p : params) {
    grads.push_back(*p.grad);
    total += p.value->numel();
  }

  // Uniform sample (without replacement) over the whole parameter space.
  std::set<int64_t> picked;
  while (static_cast<int64_t>(picked.size()) <
         std::min(opts.network_param_samples, total))
    picked.insert(rng.uniform_int(total));

  double worst = 0.0;
  for (int64_t flat : picked) {
    int64_t rest = flat;
    size_t pi = 0;
    while (rest >= params[pi].value->numel()) {
      rest -= params[pi].value->numel();
      ++pi;
    }
    Tensor<D>& tensor = *params[pi].value;
    const double keep = tensor[rest];
    tensor[rest] = keep + opts.h;
    const double up = loss_of(Mode::train).loss;
    tensor[rest] = keep - opts.h;
    const double down = loss_of(Mode::train).loss;
    tensor[rest] = keep;
    const double numeric = (up - down) / (2.0 * opts.h);
    worst = std::max(worst, rel_err(grads[pi][rest], numeric));
  }
  return {"network", worst, opts.network_tol, worst < opts.network_tol};
}

}  // namespace

std::vector<Result> run_all(const Options& opts) {
  std::vector<Result> out;
  out.push_back(check_conv3d(opts));
  out.push_back(check_batchnorm3d(opts));
  out.push_back(check_relu(opts));
  out.push_back(check_maxpool3d(opts));
  out.push_back(check_global_avgpool(opts));
  out.push_back(check_fully_connected(opts));
  out.push_back(check_softmax_xent(opts));
  out.push_back(check_network(opts));
  return out;
}

bool all_passed(const std::vector<Result>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

std::string format_report(const std::vector<Result>& results) {
  std::ostringstream os;
  for (const auto& r : results) {
    os << (r.pass ? "[PASS] " : "[FAIL] ") << r.layer
       << ": max relative error " << r.max_rel_err << " (tolerance " << r.tol
       << ")\n";
  }
  os << (all_passed(results) ? "gradcheck: all layer types passed"
                             : "gradcheck: FAILURES detected")
     << "\n";
  return os.str();
}

}  // namespace st3d::gradcheck
