#pragma once

#include <array>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

#include "st3d/dataset.hpp"
#include "st3d/rng.hpp"
#include "st3d/trainer.hpp"

namespace st3d::data {

struct AugmentConfig {
  int64_t clip_len = 16;
  int64_t crop_size = 112;
  // {1, 2^(-1/4), 2^(-1/2), 2^(-3/4), 1/2}; scale 1 is the frame's short side.
  std::array<double, 5> scales{1.0, 0.8408964152537145, 0.7071067811865476,
                               0.5946035575013605, 0.5};
  double flip_prob = 0.5;
  std::array<float, 3> mean{0.0f, 0.0f, 0.0f};

  void validate() const;
};

enum class CropPos {
  top_left = 0,
  top_right = 1,
  bottom_left = 2,
  bottom_right = 3,
  center = 4
};

struct Provenance {
  int64_t video = -1;
  int64_t start = 0;
  CropPos pos = CropPos::center;
  double scale = 1.0;
  bool flipped = false;
};

struct ClipSample {
  Tensor<float> data;  // [3, clip_len, crop, crop], mean-subtracted
  int64_t label = 0;
  Provenance prov;
};

// Frame indices (start + i) mod frame_count for i in [0, clip_len), looping
// short videos.
std::vector<int64_t> clip_indices(int64_t start, int64_t frame_count,
                                  int64_t clip_len);

// Start frame uniform over [0, frame_count-1]; indices as clip_indices.
std::vector<int64_t> sample_temporal(int64_t frame_count, int64_t clip_len,
                                     Rng& rng);

// Square side = round(scale * short side), anchored at one of the four
// corners or centered (offset = (extent - side) / 2), then bilinear-resized.
Tensor<float> crop_multiscale(const Tensor<float>& frame, CropPos pos,
                              double scale, int64_t crop_size);

// The per-clip random decisions, drawn in this order: start, position,
// scale, flip. Splitting draw from apply lets the pipeline consume the rng
// on the consumer thread while a producer does the IO.
struct AugmentDraw {
  int64_t start = 0;
  CropPos pos = CropPos::center;
  int scale_idx = 0;
  bool flip = false;
};

AugmentDraw draw_augment(int64_t frame_count, const AugmentConfig& cfg,
                         Rng& rng);

ClipSample apply_augment(const FrameFetch& fetch, int64_t frame_count,
                         int64_t label, const AugmentDraw& draw,
                         const AugmentConfig& cfg);

// One draw per clip: a single (position, scale) pair and one flip decision
// apply to all frames identically; the label is copied from the video.
ClipSample augment_clip(const FrameFetch& fetch, int64_t frame_count,
                        int64_t label, const AugmentConfig& cfg, Rng& rng);

// Deterministic non-augmented clip: scale-1 center crop, no flip (the
// recognition-time protocol). frame_indices selects the clip's frames.
Tensor<float> center_clip(const FrameFetch& fetch,
                          const std::vector<int64_t>& frame_indices,
                          const AugmentConfig& cfg);

// Stacks samples along a new leading axis, order preserved.
train::Batch<float> make_batch(const std::vector<ClipSample>& samples);

// Bounded single-consumer queue between sample producers and the trainer.
// Deterministic batch order is guaranteed only with one producer.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t capacity) : capacity_(capacity) {}

  void push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
};

// File-backed epoch stream: one augmented clip per video per epoch, video
// order shuffled by the epoch rng, grouped into batches. A producer thread
// does the file IO and augmentation behind a bounded queue.
class ClipPipeline {
 public:
  ClipPipeline(const DatasetManifest& manifest, const AugmentConfig& cfg,
               int64_t batch_size, size_t queue_capacity = 4);
  ~ClipPipeline();

  // Starts one epoch; draws come from the caller-owned rng before the
  // producer thread launches, so the stream is reproducible from rng state.
  train::BatchSource<float> epoch(Rng& rng);

 private:
  void join();

  const DatasetManifest& manifest_;
  AugmentConfig cfg_;
  int64_t batch_size_;
  size_t queue_capacity_;
  std::unique_ptr<BoundedQueue<train::Batch<float>>> queue_;
  std::thread producer_;
};

}  // namespace st3d::data
