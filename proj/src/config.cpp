#include "st3d/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace st3d::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int64_t x = std::stoll(v, &pos);
    ST3D_CONFIG_CHECK(pos == v.size(), "config: " << key << " = '" << v
                                                  << "' is not an integer");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    throw ConfigError("config: " + key + " = '" + v + "' is not an integer");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    ST3D_CONFIG_CHECK(pos == v.size(), "config: " << key << " = '" << v
                                                  << "' is not a number");
    return x;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    throw ConfigError("config: " + key + " = '" + v + "' is not a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " = '" + v + "' is not a boolean");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) out.push_back(to_double(key, tok));
  return out;
}

}  // namespace

resnet::ArchSpec RunConfig::arch_spec() const {
  resnet::ArchSpec spec;
  if (depth == "18") {
    spec = resnet::ArchSpec::resnet18(classes);
  } else if (depth == "34") {
    spec = resnet::ArchSpec::resnet34(classes);
  } else {
    spec = resnet::ArchSpec::custom(block_counts, channels, classes,
                                    {3, aug.clip_len, aug.crop_size,
                                     aug.crop_size});
    return spec;
  }
  spec.stage_channels = channels;
  spec.input_shape = {3, aug.clip_len, aug.crop_size, aug.crop_size};
  return spec;
}

void RunConfig::validate() const {
  ST3D_CONFIG_CHECK(depth == "18" || depth == "34" || depth == "custom",
                    "config: depth '" << depth << "' (18, 34, or custom)");
  if (block_counts_explicit && depth == "18")
    ST3D_CONFIG_CHECK(block_counts == (std::array<int, 4>{2, 2, 2, 2}),
                      "config: depth 18 fixes block_counts at 2 2 2 2");
  if (block_counts_explicit && depth == "34")
    ST3D_CONFIG_CHECK(block_counts == (std::array<int, 4>{3, 4, 6, 3}),
                      "config: depth 34 fixes block_counts at 3 4 6 3");
  for (int c : block_counts)
    ST3D_CONFIG_CHECK(c >= 1, "config: block count " << c << " must be >= 1");
  for (int64_t c : channels)
    ST3D_CONFIG_CHECK(c >= 1, "config: channel width " << c << " must be >= 1");
  ST3D_CONFIG_CHECK(classes >= 1, "config: classes must be >= 1");
  ST3D_CONFIG_CHECK(frame_height >= 0, "config: frame_height must be >= 0");
  ST3D_CONFIG_CHECK(checkpoint_every >= 1, "config: checkpoint_every must be >= 1");
  ST3D_CONFIG_CHECK(threads >= 1, "config: threads must be >= 1");
  aug.validate();
  train.validate();
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  ST3D_CONFIG_CHECK(is.good(), "config: cannot open " << path);

  RunConfig cfg;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      ST3D_CONFIG_CHECK(line.back() == ']',
                        "config: malformed section (line " << lineno << ")");
      section = trim(line.substr(1, line.size() - 2));
      ST3D_CONFIG_CHECK(section == "arch" || section == "data" ||
                            section == "train" || section == "run",
                        "config: unknown section [" << section << "] (line "
                                                    << lineno << ")");
      continue;
    }

    const auto eq = line.find('=');
    ST3D_CONFIG_CHECK(eq != std::string::npos,
                      "config: expected key = value (line " << lineno << ")");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    ST3D_CONFIG_CHECK(!key.empty() && !value.empty(),
                      "config: empty key or value (line " << lineno << ")");
    ST3D_CONFIG_CHECK(!section.empty(),
                      "config: key '" << key << "' outside any section (line "
                                      << lineno << ")");
    const std::string qkey = section + "." + key;

    if (section == "arch") {
      if (key == "depth") {
        cfg.depth = value;
      } else if (key == "block_counts") {
        const auto v = to_doubles(qkey, value);
        ST3D_CONFIG_CHECK(v.size() == 4, "config: block_counts needs 4 values");
        for (int i = 0; i < 4; ++i) cfg.block_counts[i] = static_cast<int>(v[i]);
        cfg.block_counts_explicit = true;
      } else if (key == "channels") {
        const auto v = to_doubles(qkey, value);
        ST3D_CONFIG_CHECK(v.size() == 4, "config: channels needs 4 values");
        for (int i = 0; i < 4; ++i) cfg.channels[i] = static_cast<int64_t>(v[i]);
      } else if (key == "classes") {
        cfg.classes = to_int(qkey, value);
      } else {
        throw ConfigError("config: unknown key '" + qkey + "'");
      }
    } else if (section == "data") {
      if (key == "root") {
        cfg.root = value;
      } else if (key == "manifest") {
        cfg.manifest = value;
      } else if (key == "val_manifest") {
        cfg.val_manifest = value;
      } else if (key == "frame_height") {
        cfg.frame_height = to_int(qkey, value);
      } else if (key == "clip_len") {
        cfg.aug.clip_len = to_int(qkey, value);
      } else if (key == "crop_size") {
        cfg.aug.crop_size = to_int(qkey, value);
      } else if (key == "scales") {
        const auto v = to_doubles(qkey, value);
        ST3D_CONFIG_CHECK(v.size() == 5, "config: scales needs 5 values");
        for (int i = 0; i < 5; ++i) cfg.aug.scales[static_cast<size_t>(i)] = v[i];
      } else if (key == "flip_prob") {
        cfg.aug.flip_prob = to_double(qkey, value);
      } else {
        throw ConfigError("config: unknown key '" + qkey + "'");
      }
    } else if (section == "train") {
      if (key == "lr") {
        cfg.train.lr0 = to_double(qkey, value);
      } else if (key == "momentum") {
        cfg.train.momentum = to_double(qkey, value);
      } else if (key == "weight_decay") {
        cfg.train.weight_decay = to_double(qkey, value);
      } else if (key == "batch_size") {
        cfg.train.batch_size = to_int(qkey, value);
      } else if (key == "max_epochs") {
        cfg.train.max_epochs = to_int(qkey, value);
      } else if (key == "patience") {
        cfg.train.plateau_patience = static_cast<int>(to_int(qkey, value));
      } else if (key == "min_delta") {
        cfg.train.plateau_min_delta = to_double(qkey, value);
      } else if (key == "decay_bn") {
        cfg.train.decay_bn_params = to_bool(qkey, value);
      } else if (key == "checkpoint_every") {
        cfg.checkpoint_every = to_int(qkey, value);
      } else {
        throw ConfigError("config: unknown key '" + qkey + "'");
      }
    } else {  // run
      if (key == "seed") {
        cfg.seed = static_cast<uint64_t>(to_int(qkey, value));
      } else if (key == "threads") {
        cfg.threads = static_cast<int>(to_int(qkey, value));
      } else if (key == "out") {
        cfg.out_dir = value;
      } else {
        throw ConfigError("config: unknown key '" + qkey + "'");
      }
    }
  }
  return cfg;
}

void apply_overrides(RunConfig& cfg, const Overrides& ov) {
  if (ov.depth) cfg.depth = *ov.depth;
  if (ov.classes) cfg.classes = *ov.classes;
  if (ov.root) cfg.root = *ov.root;
  if (ov.manifest) cfg.manifest = *ov.manifest;
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.out_dir) cfg.out_dir = *ov.out_dir;
  if (ov.threads) cfg.threads = *ov.threads;
  if (ov.lr) cfg.train.lr0 = *ov.lr;
}

}  // namespace st3d::config
