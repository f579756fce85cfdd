#include "st3d/inference.hpp"

#include <algorithm>
#include <cstring>

namespace st3d::infer {

std::vector<int64_t> split_windows(int64_t frame_count, int64_t clip_len) {
  ST3D_CHECK(frame_count >= 1, "split_windows: frame_count must be >= 1");
  ST3D_CHECK(clip_len >= 1, "split_windows: clip_len must be >= 1");
  if (frame_count < clip_len) return {0};  // single looped clip
  std::vector<int64_t> starts;
  for (int64_t s = 0; s + clip_len <= frame_count; s += clip_len)
    starts.push_back(s);
  return starts;
}

std::vector<std::pair<int64_t, float>> top_k(const Tensor<float>& probs,
                                             int64_t k) {
  const int64_t K = probs.numel();
  k = std::min(k, K);
  std::vector<std::pair<int64_t, float>> order;
  order.reserve(static_cast<size_t>(K));
  for (int64_t i = 0; i < K; ++i) order.emplace_back(i, probs[i]);
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // stable keeps lower index first on ties
  });
  order.resize(static_cast<size_t>(k));
  return order;
}

VideoPrediction predict_clips(resnet::Network<float>& net,
                              const std::vector<Tensor<float>>& clips,
                              int64_t k) {
  ST3D_CHECK(!clips.empty(), "predict: no clips");
  const Shape& cs = clips[0].shape();
  Shape batch_shape{static_cast<int64_t>(clips.size())};
  batch_shape.insert(batch_shape.end(), cs.begin(), cs.end());
  Tensor<float> batch(batch_shape);
  const int64_t per = clips[0].numel();
  for (size_t i = 0; i < clips.size(); ++i) {
    ST3D_CHECK(clips[i].shape() == cs, "predict: inconsistent clip shapes");
    std::memcpy(batch.data() + static_cast<int64_t>(i) * per,
                clips[i].data(), static_cast<size_t>(per) * sizeof(float));
  }

  Tensor<float> logits = net.forward(batch, nn::Mode::eval);
  Tensor<float> probs = nn::softmax(logits);
  const int64_t N = probs.extent(0), K = probs.extent(1);

  VideoPrediction pred;
  pred.clip_count = N;
  pred.probs = Tensor<float>({K});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t j = 0; j < K; ++j) pred.probs[j] += probs[n * K + j];
  const float inv = 1.0f / static_cast<float>(N);
  for (int64_t j = 0; j < K; ++j) pred.probs[j] *= inv;
  pred.topk = top_k(pred.probs, k);
  return pred;
}

VideoPrediction predict_video(resnet::Network<float>& net,
                              const data::DatasetManifest& manifest,
                              int64_t video_idx, const data::AugmentConfig& cfg,
                              int64_t k) {
  const auto& video = manifest.videos[static_cast<size_t>(video_idx)];
  const auto starts = split_windows(video.frame_count, cfg.clip_len);
  const auto fetch = data::file_frame_fetch(manifest, video_idx);
  std::vector<Tensor<float>> clips;
  clips.reserve(starts.size());
  for (int64_t s : starts)
    clips.push_back(data::center_clip(
        fetch, data::clip_indices(s, video.frame_count, cfg.clip_len), cfg));
  return predict_clips(net, clips, k);
}

SplitMetrics metrics_from_counts(int64_t top1_hits, int64_t top5_hits,
                                 int64_t videos) {
  ST3D_CHECK(videos >= 1, "evaluate: empty split");
  SplitMetrics m;
  m.videos = videos;
  m.top1 = 100.0 * static_cast<double>(top1_hits) / static_cast<double>(videos);
  m.top5 = 100.0 * static_cast<double>(top5_hits) / static_cast<double>(videos);
  m.average = (m.top1 + m.top5) / 2.0;
  return m;
}

SplitMetrics evaluate_split(resnet::Network<float>& net,
                            const data::DatasetManifest& manifest,
                            const data::AugmentConfig& cfg) {
  ST3D_CHECK(!manifest.videos.empty(), "evaluate: empty split");
  int64_t top1 = 0, top5 = 0;
  for (size_t vi = 0; vi < manifest.videos.size(); ++vi) {
    const auto pred =
        predict_video(net, manifest, static_cast<int64_t>(vi), cfg, 5);
    const int64_t label = manifest.videos[vi].class_idx;
    if (!pred.topk.empty() && pred.topk[0].first == label) top1++;
    for (const auto& [cls, p] : pred.topk)
      if (cls == label) {
        top5++;
        break;
      }
  }
  return metrics_from_counts(top1, top5,
                             static_cast<int64_t>(manifest.videos.size()));
}

}  // namespace st3d::infer
