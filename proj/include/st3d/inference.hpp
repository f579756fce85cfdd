#pragma once

#include <utility>
#include <vector>

#include "st3d/augment.hpp"
#include "st3d/resnet3d.hpp"

namespace st3d::infer {

// Non-overlapping window starts 0, 16, 32, ... while start + clip_len fits;
// a video shorter than one clip yields the single looped clip at start 0;
// trailing remainder frames after at least one full clip are dropped.
std::vector<int64_t> split_windows(int64_t frame_count, int64_t clip_len = 16);

struct VideoPrediction {
  Tensor<float> probs;  // [num_classes], mean of per-clip softmax
  std::vector<std::pair<int64_t, float>> topk;  // descending, ties by index
  int64_t clip_count = 0;
};

// Descending by probability; equal probabilities order by lower class index.
std::vector<std::pair<int64_t, float>> top_k(const Tensor<float>& probs,
                                             int64_t k);

// Softmax per clip, arithmetic mean across clips, top-k extraction.
// Clips are scored batched through one forward call.
VideoPrediction predict_clips(resnet::Network<float>& net,
                              const std::vector<Tensor<float>>& clips,
                              int64_t k = 5);

// The recognition protocol: non-overlapping windows, max-scale center crop.
VideoPrediction predict_video(resnet::Network<float>& net,
                              const data::DatasetManifest& manifest,
                              int64_t video_idx, const data::AugmentConfig& cfg,
                              int64_t k = 5);

struct SplitMetrics {
  double top1 = 0.0;     // percent
  double top5 = 0.0;     // percent
  double average = 0.0;  // (top1 + top5) / 2
  int64_t videos = 0;
};

SplitMetrics evaluate_split(resnet::Network<float>& net,
                            const data::DatasetManifest& manifest,
                            const data::AugmentConfig& cfg);

// Accuracy accounting shared with the tests: k clamps to the class count.
SplitMetrics metrics_from_counts(int64_t top1_hits, int64_t top5_hits,
                                 int64_t videos);

}  // namespace st3d::infer
