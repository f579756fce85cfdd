#pragma once

#include <optional>
#include <string>

#include "st3d/augment.hpp"
#include "st3d/resnet3d.hpp"
#include "st3d/trainer.hpp"

namespace st3d::config {

// Everything a run needs, merged from a sectioned key=value config file and
// command-line overrides. Unknown sections or keys are errors.
struct RunConfig {
  // [arch]
  std::string depth = "18";  // "18" | "34" | "custom"
  std::array<int, 4> block_counts{2, 2, 2, 2};      // custom only
  bool block_counts_explicit = false;
  std::array<int64_t, 4> channels{64, 128, 256, 512};
  int64_t classes = 400;

  // [data]
  std::string root;
  std::string manifest;
  std::string val_manifest;
  int64_t frame_height = 360;  // stored-frame height check; 0 disables
  data::AugmentConfig aug;

  // [train]
  train::TrainConfig train;
  int64_t checkpoint_every = 1;

  // [run]
  uint64_t seed = 0;
  int threads = 1;
  std::string out_dir = ".";

  resnet::ArchSpec arch_spec() const;
  void validate() const;
};

RunConfig parse_config_file(const std::string& path);

// Flags present on the command line win over the file.
struct Overrides {
  std::optional<std::string> depth;
  std::optional<int64_t> classes;
  std::optional<std::string> root;
  std::optional<std::string> manifest;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  std::optional<double> lr;
};

void apply_overrides(RunConfig& cfg, const Overrides& ov);

}  // namespace st3d::config
