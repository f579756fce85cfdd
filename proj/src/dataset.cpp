#include "st3d/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace st3d::data {

DatasetManifest load_manifest(const std::string& manifest_path,
                              const std::string& root) {
  std::ifstream is(manifest_path);
  ST3D_CHECK(is.good(), "manifest: cannot open " << manifest_path);
  DatasetManifest m;
  m.root = root;

  std::map<std::string, int64_t> class_index;
  bool have_classes = false, have_mean = false;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);

    if (line.rfind("classes:", first) == first) {
      ls.ignore(static_cast<std::streamsize>(first) + 8);
      std::string name;
      while (ls >> name) {
        ST3D_CHECK(!class_index.count(name),
                   "manifest: duplicate class '" << name << "' (line " << lineno
                                                 << ")");
        class_index[name] = static_cast<int64_t>(m.classes.size());
        m.classes.push_back(name);
      }
      ST3D_CHECK(!m.classes.empty(), "manifest: empty class list");
      have_classes = true;
      continue;
    }
    if (line.rfind("mean:", first) == first) {
      ls.ignore(static_cast<std::streamsize>(first) + 5);
      ls >> m.mean[0] >> m.mean[1] >> m.mean[2];
      ST3D_CHECK(!ls.fail(), "manifest: mean needs three values (line "
                                 << lineno << ")");
      have_mean = true;
      continue;
    }
    if (line.rfind("split:", first) == first) {
      ls.ignore(static_cast<std::streamsize>(first) + 6);
      ls >> m.split;
      ST3D_CHECK(m.split == "train" || m.split == "val" || m.split == "test",
                 "manifest: split '" << m.split << "' (line " << lineno << ")");
      continue;
    }

    ST3D_CHECK(have_classes,
               "manifest: video record before the classes header (line "
                   << lineno << ")");
    VideoEntry v;
    std::string class_name;
    ls >> v.path >> class_name >> v.frame_count;
    ST3D_CHECK(!ls.fail(), "manifest: malformed record (line " << lineno << ")");
    auto it = class_index.find(class_name);
    ST3D_CHECK(it != class_index.end(), "manifest: unknown class '"
                                            << class_name << "' (line "
                                            << lineno << ")");
    v.class_idx = it->second;
    ST3D_CHECK(v.frame_count >= 1, "manifest: frame count " << v.frame_count
                                                            << " (line "
                                                            << lineno << ")");
    m.videos.push_back(std::move(v));
  }
  ST3D_CHECK(have_classes, "manifest: missing classes header");
  ST3D_CHECK(have_mean, "manifest: missing mean header");
  ST3D_CHECK(!m.videos.empty(), "manifest: no video records");
  return m;
}

std::string frame_path(const DatasetManifest& m, int64_t video_idx,
                       int64_t frame_idx) {
  const auto& v = m.videos[static_cast<size_t>(video_idx)];
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%05lld.ppm",
                static_cast<long long>(frame_idx + 1));
  return m.root + "/" + v.path + "/" + name;
}

void validate_frames(const DatasetManifest& m, int64_t required_height) {
  namespace fs = std::filesystem;
  for (size_t vi = 0; vi < m.videos.size(); ++vi) {
    const auto& v = m.videos[vi];
    for (int64_t f = 0; f < v.frame_count; ++f) {
      const std::string path = frame_path(m, static_cast<int64_t>(vi), f);
      ST3D_CHECK(fs::exists(path), "dataset: missing frame file " << path);
    }
    if (required_height > 0) {
      const ImageU8 first = read_ppm(frame_path(m, static_cast<int64_t>(vi), 0));
      ST3D_CHECK(first.height == required_height,
                 "dataset: " << v.path << " stores " << first.height
                             << "-pixel-high frames, expected "
                             << required_height);
    }
  }
}

Tensor<float> load_frame(const DatasetManifest& m, int64_t video_idx,
                         int64_t frame_idx) {
  return to_planar(read_ppm(frame_path(m, video_idx, frame_idx)));
}

FrameFetch file_frame_fetch(const DatasetManifest& m, int64_t video_idx) {
  return [&m, video_idx](int64_t frame_idx) {
    return load_frame(m, video_idx, frame_idx);
  };
}

}  // namespace st3d::data
