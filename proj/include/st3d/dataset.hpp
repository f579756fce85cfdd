#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "st3d/image.hpp"

namespace st3d::data {

struct VideoEntry {
  std::string path;  // frame directory, relative to the dataset root
  int64_t class_idx = 0;
  int64_t frame_count = 0;
};

// Manifest text format: '#' comments; header lines "classes: a b c",
// "mean: r g b", "split: train|val|test"; then one video record per line:
// "<relative-path> <class-name> <frame-count>" (paths must not contain
// whitespace). Frames live at <root>/<path>/frame_%05d.ppm, 1-based.
struct DatasetManifest {
  std::string root;
  std::vector<std::string> classes;
  std::array<float, 3> mean{0.0f, 0.0f, 0.0f};
  std::string split = "train";
  std::vector<VideoEntry> videos;

  int64_t num_classes() const { return static_cast<int64_t>(classes.size()); }
};

DatasetManifest load_manifest(const std::string& manifest_path,
                              const std::string& root);

// Checks that every listed frame file exists and, when required_height > 0,
// that stored frames have that pixel height (the dataset contract expects
// pre-resized 360-pixel-high frames; the loader verifies, never resizes).
void validate_frames(const DatasetManifest& m, int64_t required_height);

std::string frame_path(const DatasetManifest& m, int64_t video_idx,
                       int64_t frame_idx);  // frame_idx is 0-based

// Loads one frame as a planar [3,H,W] float tensor in pixel units.
Tensor<float> load_frame(const DatasetManifest& m, int64_t video_idx,
                         int64_t frame_idx);

// frame index -> [3,H,W]; lets augmentation and inference run on either
// files or synthetic in-memory frames.
using FrameFetch = std::function<Tensor<float>(int64_t)>;

FrameFetch file_frame_fetch(const DatasetManifest& m, int64_t video_idx);

}  // namespace st3d::data
