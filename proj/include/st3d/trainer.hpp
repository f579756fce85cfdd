#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "st3d/resnet3d.hpp"

namespace st3d::train {

struct TrainConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.001;
  int64_t batch_size = 256;
  int max_lr_drops = 3;
  int plateau_patience = 10;
  double plateau_min_delta = 1e-4;
  int64_t max_epochs = 100;
  uint64_t seed = 0;
  bool decay_bn_params = true;  // weight decay on BN gamma/beta too

  void validate() const;
};

// Patience-based formalization of "divide the learning rate by 10 after the
// validation loss saturates", capped at max_drops divisions.
struct PlateauState {
  double lr = 0.1;
  int drops_done = 0;
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;
};

// Returns true when this call dropped the learning rate.
bool plateau_schedule(PlateauState& state, double val_loss, int patience,
                      double min_delta, int max_drops = 3);

template <typename T>
class SgdOptimizer {
 public:
  SgdOptimizer() = default;
  SgdOptimizer(resnet::Network<T>& net, const TrainConfig& cfg);

  // v <- momentum*v + (g + wd*w); w <- w - lr*v, for every trainable tensor.
  void step(resnet::Network<T>& net);
  // Feeds the plateau schedule; returns true on a drop.
  bool observe_val_loss(double val_loss);

  double lr() const { return sched_.lr; }
  const PlateauState& schedule() const { return sched_; }
  PlateauState& schedule() { return sched_; }
  const TrainConfig& config() const { return cfg_; }
  std::vector<Tensor<T>>& velocities() { return velocity_; }
  const std::vector<std::string>& velocity_names() const { return names_; }

 private:
  TrainConfig cfg_;
  PlateauState sched_;
  std::vector<Tensor<T>> velocity_;  // aligned with net.params() order
  std::vector<std::string> names_;
  std::vector<bool> decays_;
};

template <typename T>
struct Batch {
  Tensor<T> clips;               // [N, C, T, H, W]
  std::vector<int64_t> labels;   // [N]
};

// Pull-based batch stream; one epoch ends when the source returns nullopt.
template <typename T>
using BatchSource = std::function<std::optional<Batch<T>>()>;

struct EpochStats {
  double loss = 0.0;      // clip-weighted mean
  double accuracy = 0.0;  // clip-level
  int64_t clips = 0;
};

template <typename T>
EpochStats train_epoch(resnet::Network<T>& net, const BatchSource<T>& source,
                       SgdOptimizer<T>& opt);

template <typename T>
EpochStats eval_epoch(resnet::Network<T>& net, const BatchSource<T>& source);

// Wraps a fixed in-memory sample set as a shuffled per-epoch batch stream.
// The clip tensor is captured by reference and must outlive the source.
template <typename T>
BatchSource<T> memory_batches(const Tensor<T>& clips,
                              const std::vector<int64_t>& labels,
                              int64_t batch_size, Rng& rng);

}  // namespace st3d::train
