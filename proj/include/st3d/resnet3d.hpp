#pragma once

#include <array>
#include <string>
#include <vector>

#include "st3d/layers.hpp"

namespace st3d::resnet {

// Declarative description of one network variant. depth 18/34 pins the
// block counts; depth 0 is a custom (scaled-down) configuration used by
// gradcheck and the overfit tests.
struct ArchSpec {
  int depth = 18;
  std::array<int, 4> block_counts{2, 2, 2, 2};
  std::array<int64_t, 4> stage_channels{64, 128, 256, 512};
  int64_t num_classes = 400;
  std::array<int64_t, 4> input_shape{3, 16, 112, 112};  // (C, T, H, W)

  static ArchSpec resnet18(int64_t classes = 400);
  static ArchSpec resnet34(int64_t classes = 400);
  static ArchSpec custom(std::array<int, 4> counts,
                         std::array<int64_t, 4> channels, int64_t classes,
                         std::array<int64_t, 4> input);

  int64_t total_blocks() const {
    return block_counts[0] + block_counts[1] + block_counts[2] +
           block_counts[3];
  }
  void validate() const;
};

// Parameter-free type-A shortcut: sample every stride-th index along T/H/W
// starting at 0, then append (out_ch - C) zero channels.
template <typename T>
Tensor<T> type_a_shortcut(const Tensor<T>& x, int64_t out_ch, int64_t stride);
template <typename T>
Tensor<T> type_a_shortcut_backward(const Tensor<T>& grad_out,
                                   const Shape& in_shape, int64_t stride);

// Two 3x3x3 conv-BN units plus the shortcut, summed before the tail ReLU.
template <typename T>
struct BasicBlock {
  BasicBlock() = default;
  BasicBlock(int64_t in_ch, int64_t out_ch, int64_t stride);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);

  bool uses_type_a() const { return stride != 1 || out_ch != in_ch; }
  int64_t param_count() const;

  int64_t in_ch = 0, out_ch = 0, stride = 1;
  nn::Conv3d<T> conv_a, conv_b;
  nn::BatchNorm3d<T> bn_a, bn_b;
  nn::Relu<T> relu_a, relu_out;

 private:
  Shape cached_in_shape_;
};

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;  // null for running-stat buffers
};

template <typename T>
class Network {
 public:
  Network() = default;
  Network(const ArchSpec& spec, Rng& rng);

  Tensor<T> forward(const Tensor<T>& batch, nn::Mode mode);
  // Needs a prior train-mode forward; fills every parameter gradient and
  // returns grad wrt the input batch.
  Tensor<T> backward(const Tensor<T>& grad_logits);

  std::vector<ParamRef<T>> params();        // trainable, stable order
  std::vector<ParamRef<T>> buffers();       // BN running stats
  std::vector<ParamRef<T>> named_tensors(); // params then buffers
  int64_t param_count() const;

  const ArchSpec& spec() const { return spec_; }
  const std::string& block_name(size_t i) const { return block_names_[i]; }
  std::vector<BasicBlock<T>>& blocks() { return blocks_; }

  nn::Conv3d<T>& conv1() { return conv1_; }
  nn::BatchNorm3d<T>& bn1() { return bn1_; }
  nn::FullyConnected<T>& fc() { return fc_; }

 private:
  ArchSpec spec_;
  nn::Conv3d<T> conv1_;
  nn::BatchNorm3d<T> bn1_;
  nn::Relu<T> relu1_;
  nn::MaxPool3d<T> pool1_;
  std::vector<BasicBlock<T>> blocks_;
  std::vector<std::string> block_names_;
  nn::FullyConnected<T> fc_;
  nn::GlobalAvgPool<T> avgpool_;
  bool have_train_cache_ = false;
};

// One row of the architecture table printed by the inspect command.
struct LayerRow {
  std::string name;
  std::string desc;
  Shape out_shape;   // with symbolic batch dim N = -1
  int64_t params = 0;
  bool downsample = false;
};

struct NetworkSummary {
  std::vector<LayerRow> rows;
  int64_t total_params = 0;
  std::array<int, 4> block_counts{};
};

// Computed from shape formulas alone; param counts come from the layer
// definitions, so they match the live network exactly.
NetworkSummary summarize(const ArchSpec& spec);

std::string format_summary(const NetworkSummary& summary);

}  // namespace st3d::resnet
