#include "st3d/augment.hpp"

#include <cmath>
#include <cstring>

namespace st3d::data {

void AugmentConfig::validate() const {
  ST3D_CONFIG_CHECK(clip_len >= 1, "augment: clip_len must be >= 1");
  ST3D_CONFIG_CHECK(crop_size >= 1, "augment: crop_size must be >= 1");
  ST3D_CONFIG_CHECK(flip_prob >= 0.0 && flip_prob <= 1.0,
                    "augment: flip_prob must lie in [0,1]");
  for (size_t i = 0; i < scales.size(); ++i) {
    ST3D_CONFIG_CHECK(scales[i] > 0.0 && scales[i] <= 1.0,
                      "augment: scale " << scales[i] << " outside (0,1]");
    if (i > 0)
      ST3D_CONFIG_CHECK(scales[i] < scales[i - 1],
                        "augment: scales must be strictly decreasing");
  }
}

std::vector<int64_t> clip_indices(int64_t start, int64_t frame_count,
                                  int64_t clip_len) {
  ST3D_CHECK(frame_count >= 1, "clip_indices: frame_count must be >= 1");
  std::vector<int64_t> idx(static_cast<size_t>(clip_len));
  for (int64_t i = 0; i < clip_len; ++i)
    idx[i] = (start + i) % frame_count;
  return idx;
}

std::vector<int64_t> sample_temporal(int64_t frame_count, int64_t clip_len,
                                     Rng& rng) {
  ST3D_CHECK(frame_count >= 1, "sample_temporal: frame_count must be >= 1");
  return clip_indices(rng.uniform_int(frame_count), frame_count, clip_len);
}

namespace {

struct CropWindow {
  int64_t row0, col0, side;
};

CropWindow crop_window(int64_t H, int64_t W, CropPos pos, double scale) {
  const int64_t short_side = std::min(H, W);
  const int64_t side =
      static_cast<int64_t>(std::llround(scale * static_cast<double>(short_side)));
  ST3D_CHECK(side >= 1 && side <= short_side,
             "crop: scale " << scale << " gives side " << side << " on " << H
                            << "x" << W);
  int64_t row0 = 0, col0 = 0;
  switch (pos) {
    case CropPos::top_left:
      break;
    case CropPos::top_right:
      col0 = W - side;
      break;
    case CropPos::bottom_left:
      row0 = H - side;
      break;
    case CropPos::bottom_right:
      row0 = H - side;
      col0 = W - side;
      break;
    case CropPos::center:
      row0 = (H - side) / 2;
      col0 = (W - side) / 2;
      break;
  }
  return {row0, col0, side};
}

}  // namespace

Tensor<float> crop_multiscale(const Tensor<float>& frame, CropPos pos,
                              double scale, int64_t crop_size) {
  ST3D_CHECK(frame.rank() == 3, "crop: expects [3,H,W], got "
                                    << shape_str(frame.shape()));
  const auto win = crop_window(frame.extent(1), frame.extent(2), pos, scale);
  return bilinear_resize(crop_square(frame, win.row0, win.col0, win.side),
                         crop_size, crop_size);
}

AugmentDraw draw_augment(int64_t frame_count, const AugmentConfig& cfg,
                         Rng& rng) {
  AugmentDraw d;
  d.start = rng.uniform_int(frame_count);
  d.pos = static_cast<CropPos>(rng.uniform_int(5));
  d.scale_idx = static_cast<int>(rng.uniform_int(5));
  d.flip = rng.uniform() < cfg.flip_prob;
  return d;
}

ClipSample apply_augment(const FrameFetch& fetch, int64_t frame_count,
                         int64_t label, const AugmentDraw& draw,
                         const AugmentConfig& cfg) {
  const auto indices = clip_indices(draw.start, frame_count, cfg.clip_len);
  const double scale = cfg.scales[static_cast<size_t>(draw.scale_idx)];
  const int64_t plane = cfg.crop_size * cfg.crop_size;

  ClipSample sample;
  sample.label = label;
  sample.prov = {-1, draw.start, draw.pos, scale, draw.flip};
  sample.data = Tensor<float>({3, cfg.clip_len, cfg.crop_size, cfg.crop_size});

  for (int64_t t = 0; t < cfg.clip_len; ++t) {
    Tensor<float> frame =
        crop_multiscale(fetch(indices[t]), draw.pos, scale, cfg.crop_size);
    if (draw.flip) frame = flip_horizontal(frame);
    for (int64_t c = 0; c < 3; ++c) {
      const float* src = frame.data() + c * plane;
      float* dst = sample.data.data() + (c * cfg.clip_len + t) * plane;
      const float mean = cfg.mean[static_cast<size_t>(c)];
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] - mean;
    }
  }
  return sample;
}

ClipSample augment_clip(const FrameFetch& fetch, int64_t frame_count,
                        int64_t label, const AugmentConfig& cfg, Rng& rng) {
  return apply_augment(fetch, frame_count, label, draw_augment(frame_count, cfg, rng),
                       cfg);
}

Tensor<float> center_clip(const FrameFetch& fetch,
                          const std::vector<int64_t>& frame_indices,
                          const AugmentConfig& cfg) {
  ST3D_CHECK(static_cast<int64_t>(frame_indices.size()) == cfg.clip_len,
             "center_clip: expected " << cfg.clip_len << " frame indices");
  const int64_t plane = cfg.crop_size * cfg.crop_size;
  Tensor<float> clip({3, cfg.clip_len, cfg.crop_size, cfg.crop_size});
  for (int64_t t = 0; t < cfg.clip_len; ++t) {
    Tensor<float> frame = crop_multiscale(fetch(frame_indices[t]),
                                          CropPos::center, 1.0, cfg.crop_size);
    for (int64_t c = 0; c < 3; ++c) {
      const float* src = frame.data() + c * plane;
      float* dst = clip.data() + (c * cfg.clip_len + t) * plane;
      const float mean = cfg.mean[static_cast<size_t>(c)];
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] - mean;
    }
  }
  return clip;
}

train::Batch<float> make_batch(const std::vector<ClipSample>& samples) {
  ST3D_CHECK(!samples.empty(), "make_batch: empty sample list");
  const Shape& s0 = samples[0].data.shape();
  for (const auto& s : samples)
    ST3D_CHECK(s.data.shape() == s0, "make_batch: sample shape "
                                         << shape_str(s.data.shape()) << " vs "
                                         << shape_str(s0));
  Shape out_shape{static_cast<int64_t>(samples.size())};
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());

  train::Batch<float> batch{Tensor<float>(out_shape), {}};
  const int64_t sample_elems = samples[0].data.numel();
  for (size_t i = 0; i < samples.size(); ++i) {
    std::memcpy(batch.clips.data() + static_cast<int64_t>(i) * sample_elems,
                samples[i].data.data(),
                static_cast<size_t>(sample_elems) * sizeof(float));
    batch.labels.push_back(samples[i].label);
  }
  return batch;
}

// ---------------- ClipPipeline ----------------

ClipPipeline::ClipPipeline(const DatasetManifest& manifest,
                           const AugmentConfig& cfg, int64_t batch_size,
                           size_t queue_capacity)
    : manifest_(manifest),
      cfg_(cfg),
      batch_size_(batch_size),
      queue_capacity_(queue_capacity) {
  cfg_.validate();
  ST3D_CHECK(batch_size_ >= 1, "pipeline: batch_size must be >= 1");
}

ClipPipeline::~ClipPipeline() { join(); }

void ClipPipeline::join() {
  if (queue_) queue_->close();
  if (producer_.joinable()) producer_.join();
  queue_.reset();
}

train::BatchSource<float> ClipPipeline::epoch(Rng& rng) {
  join();

  // All randomness is consumed here, before the producer starts, so the
  // epoch is a pure function of the rng state that a checkpoint captures.
  const auto order = rng.permutation(static_cast<int64_t>(manifest_.videos.size()));
  std::vector<std::pair<int64_t, AugmentDraw>> plan;
  plan.reserve(order.size());
  for (int64_t vi : order)
    plan.emplace_back(
        vi, draw_augment(manifest_.videos[static_cast<size_t>(vi)].frame_count,
                         cfg_, rng));

  queue_ = std::make_unique<BoundedQueue<train::Batch<float>>>(queue_capacity_);
  auto* queue = queue_.get();
  const DatasetManifest& manifest = manifest_;
  const AugmentConfig cfg = cfg_;
  const int64_t batch_size = batch_size_;

  producer_ = std::thread([queue, &manifest, cfg, batch_size,
                           plan = std::move(plan)]() {
    std::vector<ClipSample> pending;
    for (const auto& [vi, draw] : plan) {
      const auto& video = manifest.videos[static_cast<size_t>(vi)];
      ClipSample s = apply_augment(file_frame_fetch(manifest, vi),
                                   video.frame_count, video.class_idx, draw,
                                   cfg);
      s.prov.video = vi;
      pending.push_back(std::move(s));
      if (static_cast<int64_t>(pending.size()) == batch_size) {
        queue->push(make_batch(pending));
        pending.clear();
      }
    }
    if (!pending.empty()) queue->push(make_batch(pending));
    queue->close();
  });

  return [queue]() { return queue->pop(); };
}

}  // namespace st3d::data
