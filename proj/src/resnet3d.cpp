#include "st3d/resnet3d.hpp"

#include <iomanip>
#include <sstream>

namespace st3d::resnet {

ArchSpec ArchSpec::resnet18(int64_t classes) {
  ArchSpec s;
  s.depth = 18;
  s.block_counts = {2, 2, 2, 2};
  s.num_classes = classes;
  return s;
}

ArchSpec ArchSpec::resnet34(int64_t classes) {
  ArchSpec s;
  s.depth = 34;
  s.block_counts = {3, 4, 6, 3};
  s.num_classes = classes;
  return s;
}

ArchSpec ArchSpec::custom(std::array<int, 4> counts,
                          std::array<int64_t, 4> channels, int64_t classes,
                          std::array<int64_t, 4> input) {
  ArchSpec s;
  s.depth = 0;
  s.block_counts = counts;
  s.stage_channels = channels;
  s.num_classes = classes;
  s.input_shape = input;
  return s;
}

void ArchSpec::validate() const {
  if (depth == 18) {
    ST3D_CHECK(block_counts == (std::array<int, 4>{2, 2, 2, 2}),
               "arch: depth 18 requires block counts [2,2,2,2]");
  } else if (depth == 34) {
    ST3D_CHECK(block_counts == (std::array<int, 4>{3, 4, 6, 3}),
               "arch: depth 34 requires block counts [3,4,6,3]");
  } else {
    ST3D_CHECK(depth == 0, "arch: unsupported depth " << depth
                                                      << " (18, 34, or 0 for custom)");
    for (int c : block_counts)
      ST3D_CHECK(c >= 1, "arch: block count " << c << " must be >= 1");
  }
  for (int64_t c : stage_channels)
    ST3D_CHECK(c >= 1, "arch: stage channels must be >= 1");
  ST3D_CHECK(num_classes >= 1, "arch: num_classes must be >= 1");
  for (int64_t e : input_shape)
    ST3D_CHECK(e >= 1, "arch: input extents must be >= 1");
}

// ---------------- type-A shortcut ----------------

namespace {

std::vector<std::pair<int64_t, int64_t>> shortcut_pads(int64_t in_ch,
                                                       int64_t out_ch) {
  return {{0, 0}, {0, out_ch - in_ch}, {0, 0}, {0, 0}, {0, 0}};
}

std::vector<int64_t> shortcut_steps(int64_t stride) {
  return {1, 1, stride, stride, stride};
}

}  // namespace

template <typename T>
Tensor<T> type_a_shortcut(const Tensor<T>& x, int64_t out_ch, int64_t stride) {
  ST3D_CHECK(x.rank() == 5, "type_a_shortcut: expects [N,C,T,H,W]");
  ST3D_CHECK(out_ch >= x.extent(1), "type_a_shortcut: out_ch "
                                        << out_ch << " < in channels "
                                        << x.extent(1));
  ST3D_CHECK(stride == 1 || stride == 2, "type_a_shortcut: stride must be 1 or 2");
  if (out_ch == x.extent(1) && stride == 1) return x;
  return pad_and_slice(x, shortcut_pads(x.extent(1), out_ch),
                       shortcut_steps(stride));
}

template <typename T>
Tensor<T> type_a_shortcut_backward(const Tensor<T>& grad_out,
                                   const Shape& in_shape, int64_t stride) {
  if (grad_out.shape() == in_shape && stride == 1) return grad_out;
  return pad_and_slice_backward(grad_out, in_shape,
                                shortcut_pads(in_shape[1], grad_out.extent(1)),
                                shortcut_steps(stride));
}

// ---------------- BasicBlock ----------------

template <typename T>
BasicBlock<T>::BasicBlock(int64_t in_ch_, int64_t out_ch_, int64_t stride_)
    : in_ch(in_ch_),
      out_ch(out_ch_),
      stride(stride_),
      conv_a(in_ch_, out_ch_, {3, 3, 3},
             {stride_, stride_, stride_}, {1, 1, 1}),
      conv_b(out_ch_, out_ch_, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}),
      bn_a(out_ch_),
      bn_b(out_ch_) {
  ST3D_CHECK(out_ch >= in_ch, "basic_block: channels cannot shrink ("
                                  << in_ch << " -> " << out_ch << ")");
}

template <typename T>
void BasicBlock<T>::init(Rng& rng) {
  conv_a.init(rng);
  conv_b.init(rng);
}

template <typename T>
int64_t BasicBlock<T>::param_count() const {
  return conv_a.param_count() + conv_b.param_count() + 2 * out_ch + 2 * out_ch;
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(const Tensor<T>& x, nn::Mode mode) {
  Tensor<T> h = relu_a.forward(bn_a.forward(conv_a.forward(x, mode), mode), mode);
  h = bn_b.forward(conv_b.forward(h, mode), mode);
  Tensor<T> sc = type_a_shortcut(x, out_ch, stride);
  ST3D_CHECK(sc.same_shape(h), "basic_block: shortcut shape "
                                   << shape_str(sc.shape())
                                   << " vs branch " << shape_str(h.shape()));
  if (mode == nn::Mode::train) cached_in_shape_ = x.shape();
  return relu_out.forward(add(h, sc), mode);
}

template <typename T>
Tensor<T> BasicBlock<T>::backward(const Tensor<T>& grad_out) {
  ST3D_CHECK(!cached_in_shape_.empty(),
             "basic_block: backward without a cached train-mode forward");
  Tensor<T> d_sum = relu_out.backward(grad_out);
  // Branch path.
  Tensor<T> d = conv_b.backward(bn_b.backward(d_sum));
  d = conv_a.backward(bn_a.backward(relu_a.backward(d)));
  // Shortcut path.
  Tensor<T> d_sc = uses_type_a()
                       ? type_a_shortcut_backward(d_sum, cached_in_shape_, stride)
                       : std::move(d_sum);
  return add(d, d_sc);
}

// ---------------- Network ----------------

template <typename T>
Network<T>::Network(const ArchSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  conv1_ = nn::Conv3d<T>(spec_.input_shape[0], spec_.stage_channels[0],
                         {7, 7, 7}, {1, 2, 2}, {3, 3, 3});
  bn1_ = nn::BatchNorm3d<T>(spec_.stage_channels[0]);
  pool1_ = nn::MaxPool3d<T>({3, 3, 3}, {2, 2, 2}, {1, 1, 1});

  conv1_.init(rng);
  int64_t prev_ch = spec_.stage_channels[0];
  for (int s = 0; s < 4; ++s) {
    const int64_t ch = spec_.stage_channels[s];
    for (int b = 0; b < spec_.block_counts[s]; ++b) {
      const int64_t in_ch = (b == 0) ? prev_ch : ch;
      const int64_t stride = (b == 0 && s > 0) ? 2 : 1;
      blocks_.emplace_back(in_ch, ch, stride);
      blocks_.back().init(rng);
      block_names_.push_back("conv" + std::to_string(s + 2) + "_" +
                             std::to_string(b + 1));
    }
    prev_ch = ch;
  }
  fc_ = nn::FullyConnected<T>(spec_.stage_channels[3], spec_.num_classes);
  fc_.init(rng);
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch, nn::Mode mode) {
  ST3D_CHECK(batch.rank() == 5 && batch.extent(1) == spec_.input_shape[0] &&
                 batch.extent(2) == spec_.input_shape[1] &&
                 batch.extent(3) == spec_.input_shape[2] &&
                 batch.extent(4) == spec_.input_shape[3],
             "network: batch shape " << shape_str(batch.shape())
                                     << " does not match spec input (N,"
                                     << spec_.input_shape[0] << ","
                                     << spec_.input_shape[1] << ","
                                     << spec_.input_shape[2] << ","
                                     << spec_.input_shape[3] << ")");
  Tensor<T> h = pool1_.forward(
      relu1_.forward(bn1_.forward(conv1_.forward(batch, mode), mode), mode),
      mode);
  for (auto& block : blocks_) h = block.forward(h, mode);
  Tensor<T> pooled = avgpool_.forward(h, mode);
  if (mode == nn::Mode::train) have_train_cache_ = true;
  return fc_.forward(pooled, mode);
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_logits) {
  ST3D_CHECK(have_train_cache_,
             "network: backward without a cached train-mode forward");
  Tensor<T> d = avgpool_.backward(fc_.backward(grad_logits));
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
    d = it->backward(d);
  d = conv1_.backward(bn1_.backward(relu1_.backward(pool1_.backward(d))));
  have_train_cache_ = false;
  return d;
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::params() {
  std::vector<ParamRef<T>> out;
  out.push_back({"conv1.weight", &conv1_.weight, &conv1_.grad_weight});
  out.push_back({"bn1.gamma", &bn1_.gamma, &bn1_.grad_gamma});
  out.push_back({"bn1.beta", &bn1_.beta, &bn1_.grad_beta});
  for (size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    const std::string& p = block_names_[i];
    out.push_back({p + ".conv_a.weight", &b.conv_a.weight, &b.conv_a.grad_weight});
    out.push_back({p + ".bn_a.gamma", &b.bn_a.gamma, &b.bn_a.grad_gamma});
    out.push_back({p + ".bn_a.beta", &b.bn_a.beta, &b.bn_a.grad_beta});
    out.push_back({p + ".conv_b.weight", &b.conv_b.weight, &b.conv_b.grad_weight});
    out.push_back({p + ".bn_b.gamma", &b.bn_b.gamma, &b.bn_b.grad_gamma});
    out.push_back({p + ".bn_b.beta", &b.bn_b.beta, &b.bn_b.grad_beta});
  }
  out.push_back({"fc.weight", &fc_.weight, &fc_.grad_weight});
  out.push_back({"fc.bias", &fc_.bias, &fc_.grad_bias});
  return out;
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::buffers() {
  std::vector<ParamRef<T>> out;
  out.push_back({"bn1.running_mean", &bn1_.running_mean, nullptr});
  out.push_back({"bn1.running_var", &bn1_.running_var, nullptr});
  for (size_t i = 0; i < blocks_.size(); ++i) {
    auto& b = blocks_[i];
    const std::string& p = block_names_[i];
    out.push_back({p + ".bn_a.running_mean", &b.bn_a.running_mean, nullptr});
    out.push_back({p + ".bn_a.running_var", &b.bn_a.running_var, nullptr});
    out.push_back({p + ".bn_b.running_mean", &b.bn_b.running_mean, nullptr});
    out.push_back({p + ".bn_b.running_var", &b.bn_b.running_var, nullptr});
  }
  return out;
}

template <typename T>
std::vector<ParamRef<T>> Network<T>::named_tensors() {
  auto out = params();
  auto bufs = buffers();
  out.insert(out.end(), bufs.begin(), bufs.end());
  return out;
}

template <typename T>
int64_t Network<T>::param_count() const {
  auto* self = const_cast<Network<T>*>(this);
  int64_t total = 0;
  for (const auto& p : self->params()) total += p.value->numel();
  return total;
}

// ---------------- summary ----------------

namespace {

std::string dims_str(const std::array<int64_t, 3>& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" +
         std::to_string(d[2]);
}

Shape with_batch(std::initializer_list<int64_t> dims) {
  Shape s{-1};
  s.insert(s.end(), dims.begin(), dims.end());
  return s;
}

}  // namespace

NetworkSummary summarize(const ArchSpec& spec) {
  spec.validate();
  NetworkSummary sum;
  sum.block_counts = spec.block_counts;

  int64_t C = spec.input_shape[0], Ti = spec.input_shape[1],
          Hi = spec.input_shape[2], Wi = spec.input_shape[3];

  auto conv_out = [](int64_t in, int64_t k, int64_t s, int64_t p) {
    return nn::conv_out_extent(in, k, s, p);
  };

  // conv1: 7x7x7, stride (1,2,2), pad 3.
  int64_t ch = spec.stage_channels[0];
  int64_t To = conv_out(Ti, 7, 1, 3), Ho = conv_out(Hi, 7, 2, 3),
          Wo = conv_out(Wi, 7, 2, 3);
  sum.rows.push_back({"conv1",
                      "7x7x7, " + std::to_string(ch) + ", stride (1,2,2), pad 3",
                      with_batch({ch, To, Ho, Wo}), C * ch * 343, false});
  sum.rows.push_back({"bn1", "batch norm", with_batch({ch, To, Ho, Wo}),
                      2 * ch, false});
  // 3x3x3 max pool, stride 2, pad 1.
  To = conv_out(To, 3, 2, 1);
  Ho = conv_out(Ho, 3, 2, 1);
  Wo = conv_out(Wo, 3, 2, 1);
  sum.rows.push_back({"pool1", "3x3x3 max pool, stride 2, pad 1",
                      with_batch({ch, To, Ho, Wo}), 0, false});

  int64_t prev_ch = ch;
  for (int s = 0; s < 4; ++s) {
    const int64_t c = spec.stage_channels[s];
    for (int b = 0; b < spec.block_counts[s]; ++b) {
      const int64_t in_ch = (b == 0) ? prev_ch : c;
      const int64_t stride = (b == 0 && s > 0) ? 2 : 1;
      if (stride == 2) {
        To = conv_out(To, 3, 2, 1);
        Ho = conv_out(Ho, 3, 2, 1);
        Wo = conv_out(Wo, 3, 2, 1);
      }
      const int64_t params = in_ch * c * 27 + c * c * 27 + 4 * c;
      std::string desc = "[3x3x3, " + std::to_string(c) + "] x2";
      if (stride == 2) desc += ", stride 2";
      if (stride != 1 || in_ch != c) desc += ", type-A shortcut";
      sum.rows.push_back({"conv" + std::to_string(s + 2) + "_" +
                              std::to_string(b + 1),
                          desc, with_batch({c, To, Ho, Wo}), params,
                          stride == 2});
    }
    prev_ch = c;
  }
  sum.rows.push_back({"avgpool", "global average pool",
                      with_batch({prev_ch}), 0, false});
  sum.rows.push_back(
      {"fc",
       std::to_string(prev_ch) + " -> " + std::to_string(spec.num_classes),
       with_batch({spec.num_classes}),
       prev_ch * spec.num_classes + spec.num_classes, false});

  for (const auto& r : sum.rows) sum.total_params += r.params;
  return sum;
}

std::string format_summary(const NetworkSummary& sum) {
  std::ostringstream os;
  os << "block counts: [" << sum.block_counts[0] << "," << sum.block_counts[1]
     << "," << sum.block_counts[2] << "," << sum.block_counts[3] << "]\n";
  os << std::left << std::setw(10) << "layer" << std::setw(36) << "spec"
     << std::setw(22) << "output" << std::right << std::setw(12) << "params"
     << "\n";
  for (const auto& r : sum.rows) {
    std::string shape = "(N";
    for (size_t i = 1; i < r.out_shape.size(); ++i)
      shape += "," + std::to_string(r.out_shape[i]);
    shape += ")";
    os << std::left << std::setw(10) << r.name << std::setw(36) << r.desc
       << std::setw(22) << shape << std::right << std::setw(12) << r.params
       << (r.downsample ? "  [down]" : "") << "\n";
  }
  os << "total trainable parameters: " << sum.total_params << "\n";
  return os.str();
}

#define ST3D_INSTANTIATE(T)                                                  \
  template Tensor<T> type_a_shortcut<T>(const Tensor<T>&, int64_t, int64_t); \
  template Tensor<T> type_a_shortcut_backward<T>(const Tensor<T>&,           \
                                                 const Shape&, int64_t);     \
  template struct BasicBlock<T>;                                             \
  template class Network<T>;

ST3D_INSTANTIATE(float)
ST3D_INSTANTIATE(double)

#undef ST3D_INSTANTIATE

}  // namespace st3d::resnet
