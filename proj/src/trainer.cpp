#include "st3d/trainer.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "st3d/kernels.hpp"

namespace st3d::train {

void TrainConfig::validate() const {
  ST3D_CONFIG_CHECK(lr0 >= 0.0, "train: lr must be >= 0");
  ST3D_CONFIG_CHECK(momentum >= 0.0 && momentum < 1.0,
                    "train: momentum must lie in [0,1)");
  ST3D_CONFIG_CHECK(weight_decay >= 0.0, "train: weight_decay must be >= 0");
  ST3D_CONFIG_CHECK(batch_size >= 1, "train: batch_size must be >= 1");
  ST3D_CONFIG_CHECK(max_lr_drops == 3, "train: the schedule divides by 10 three times");
  ST3D_CONFIG_CHECK(plateau_patience >= 1, "train: patience must be >= 1");
  ST3D_CONFIG_CHECK(plateau_min_delta >= 0.0, "train: min_delta must be >= 0");
  ST3D_CONFIG_CHECK(max_epochs >= 1, "train: max_epochs must be >= 1");
}

bool plateau_schedule(PlateauState& state, double val_loss, int patience,
                      double min_delta, int max_drops) {
  ST3D_CHECK(!std::isnan(val_loss), "plateau: validation loss is NaN; aborting");
  if (val_loss < state.best - min_delta) {
    state.best = val_loss;
    state.stall = 0;
    return false;
  }
  state.stall++;
  if (state.stall >= patience && state.drops_done < max_drops) {
    state.lr /= 10.0;
    state.drops_done++;
    state.stall = 0;
    return true;
  }
  return false;
}

template <typename T>
SgdOptimizer<T>::SgdOptimizer(resnet::Network<T>& net, const TrainConfig& cfg)
    : cfg_(cfg) {
  cfg_.validate();
  sched_.lr = cfg_.lr0;
  for (const auto& p : net.params()) {
    velocity_.emplace_back(p.value->shape());
    names_.push_back(p.name);
    const bool is_bn = p.name.find(".gamma") != std::string::npos ||
                       p.name.find(".beta") != std::string::npos;
    decays_.push_back(cfg_.decay_bn_params || !is_bn);
  }
}

template <typename T>
void SgdOptimizer<T>::step(resnet::Network<T>& net) {
  auto params = net.params();
  ST3D_CHECK(params.size() == velocity_.size(),
             "sgd: optimizer built for a different parameter set");
  const auto& k = kernels::table<T>();
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& w = *params[i].value;
    Tensor<T>& g = *params[i].grad;
    Tensor<T>& v = velocity_[i];
    ST3D_CHECK(w.same_shape(v) && w.same_shape(g),
               "sgd: shape mismatch for " << params[i].name);
    const T wd = decays_[i] ? static_cast<T>(cfg_.weight_decay) : T(0);
    k.sgd_update(w.data(), g.data(), v.data(), w.numel(),
                 static_cast<T>(sched_.lr), static_cast<T>(cfg_.momentum), wd);
  }
}

template <typename T>
bool SgdOptimizer<T>::observe_val_loss(double val_loss) {
  return plateau_schedule(sched_, val_loss, cfg_.plateau_patience,
                          cfg_.plateau_min_delta, cfg_.max_lr_drops);
}

namespace {

template <typename T>
int64_t count_correct(const Tensor<T>& logits,
                      const std::vector<int64_t>& labels) {
  const int64_t N = logits.extent(0), K = logits.extent(1);
  int64_t correct = 0;
  for (int64_t n = 0; n < N; ++n) {
    const T* row = logits.data() + n * K;
    int64_t arg = 0;
    for (int64_t j = 1; j < K; ++j)
      if (row[j] > row[arg]) arg = j;  // first maximizer
    if (arg == labels[n]) correct++;
  }
  return correct;
}

}  // namespace

template <typename T>
EpochStats train_epoch(resnet::Network<T>& net, const BatchSource<T>& source,
                       SgdOptimizer<T>& opt) {
  EpochStats stats;
  double loss_sum = 0.0;
  int64_t correct = 0;
  while (auto batch = source()) {
    const int64_t n = batch->clips.extent(0);
    Tensor<T> logits = net.forward(batch->clips, nn::Mode::train);
    auto xent = nn::softmax_cross_entropy(logits, batch->labels);
    net.backward(xent.grad_logits);
    opt.step(net);
    loss_sum += static_cast<double>(xent.loss) * n;
    correct += count_correct(logits, batch->labels);
    stats.clips += n;
  }
  ST3D_CHECK(stats.clips > 0, "train_epoch: batch source produced no data");
  stats.loss = loss_sum / stats.clips;
  stats.accuracy = static_cast<double>(correct) / stats.clips;
  return stats;
}

template <typename T>
EpochStats eval_epoch(resnet::Network<T>& net, const BatchSource<T>& source) {
  EpochStats stats;
  double loss_sum = 0.0;
  int64_t correct = 0;
  while (auto batch = source()) {
    const int64_t n = batch->clips.extent(0);
    Tensor<T> logits = net.forward(batch->clips, nn::Mode::eval);
    auto xent = nn::softmax_cross_entropy(logits, batch->labels);
    loss_sum += static_cast<double>(xent.loss) * n;
    correct += count_correct(logits, batch->labels);
    stats.clips += n;
  }
  ST3D_CHECK(stats.clips > 0, "eval_epoch: batch source produced no data");
  stats.loss = loss_sum / stats.clips;
  stats.accuracy = static_cast<double>(correct) / stats.clips;
  return stats;
}

template <typename T>
BatchSource<T> memory_batches(const Tensor<T>& clips,
                              const std::vector<int64_t>& labels,
                              int64_t batch_size, Rng& rng) {
  ST3D_CHECK(clips.rank() == 5, "memory_batches: clips must be [N,C,T,H,W]");
  const int64_t total = clips.extent(0);
  ST3D_CHECK(static_cast<int64_t>(labels.size()) == total,
             "memory_batches: " << labels.size() << " labels for " << total
                                << " clips");
  auto order = rng.permutation(total);
  const int64_t sample = clips.numel() / total;
  auto cursor = std::make_shared<int64_t>(0);

  return [&clips, labels, batch_size, order, sample, cursor, total]()
             -> std::optional<Batch<T>> {
    if (*cursor >= total) return std::nullopt;
    const int64_t n = std::min<int64_t>(batch_size, total - *cursor);
    Shape shape = clips.shape();
    shape[0] = n;
    Batch<T> batch{Tensor<T>(shape), {}};
    batch.labels.resize(n);
    for (int64_t i = 0; i < n; ++i) {
      const int64_t src = order[*cursor + i];
      std::memcpy(batch.clips.data() + i * sample,
                  clips.data() + src * sample,
                  static_cast<size_t>(sample) * sizeof(T));
      batch.labels[i] = labels[src];
    }
    *cursor += n;
    return batch;
  };
}

#define ST3D_INSTANTIATE(T)                                                   \
  template class SgdOptimizer<T>;                                             \
  template EpochStats train_epoch<T>(resnet::Network<T>&,                     \
                                     const BatchSource<T>&, SgdOptimizer<T>&); \
  template EpochStats eval_epoch<T>(resnet::Network<T>&,                      \
                                    const BatchSource<T>&);                   \
  template BatchSource<T> memory_batches<T>(const Tensor<T>&,                 \
                                            const std::vector<int64_t>&,      \
                                            int64_t, Rng&);

ST3D_INSTANTIATE(float)
ST3D_INSTANTIATE(double)

#undef ST3D_INSTANTIATE

}  // namespace st3d::train
