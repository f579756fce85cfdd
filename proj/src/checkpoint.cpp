#include "st3d/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace st3d::train {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  ST3D_CHECK(is.good(), "checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  ST3D_CHECK(is.good(), "checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

double get_f64(std::istream& is) {
  const uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const uint32_t len = get_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  ST3D_CHECK(is.good(), "checkpoint: truncated file");
  return s;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, resnet::Network<T>& net,
                     SgdOptimizer<T>& opt, int64_t epoch, const Rng& rng) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  ST3D_CHECK(os.good(), "checkpoint: cannot open " << path << " for writing");
  os.write("STCK", 4);
  put_u32(os, kCheckpointVersion);

  auto tensors = net.named_tensors();
  auto& velocities = opt.velocities();
  const auto& vnames = opt.velocity_names();
  put_u32(os, static_cast<uint32_t>(tensors.size() + velocities.size()));
  for (const auto& t : tensors) {
    put_string(os, t.name);
    write_tensor(os, *t.value);
  }
  for (size_t i = 0; i < velocities.size(); ++i) {
    put_string(os, "opt.v." + vnames[i]);
    write_tensor(os, velocities[i]);
  }

  const auto& sched = opt.schedule();
  put_u32(os, 2);  // scalars
  put_string(os, "lr");
  put_f64(os, sched.lr);
  put_string(os, "best_val_loss");
  put_f64(os, sched.best);

  put_u32(os, 3);  // counters
  put_string(os, "epoch");
  put_u64(os, static_cast<uint64_t>(epoch));
  put_string(os, "drops_done");
  put_u64(os, static_cast<uint64_t>(sched.drops_done));
  put_string(os, "stall");
  put_u64(os, static_cast<uint64_t>(sched.stall));

  put_string(os, rng.serialize());
  ST3D_CHECK(os.good(), "checkpoint: write to " << path << " failed");
}

template <typename T>
int64_t load_checkpoint(const std::string& path, resnet::Network<T>& net,
                        SgdOptimizer<T>& opt, Rng& rng) {
  std::ifstream is(path, std::ios::binary);
  ST3D_CHECK(is.good(), "checkpoint: cannot open " << path);
  char magic[4];
  is.read(magic, 4);
  ST3D_CHECK(is.good() && std::memcmp(magic, "STCK", 4) == 0,
             "checkpoint: bad magic in " << path);
  const uint32_t version = get_u32(is);
  ST3D_CHECK(version == kCheckpointVersion,
             "checkpoint: unsupported format version " << version);

  std::map<std::string, Tensor<T>*> slots;
  for (auto& t : net.named_tensors()) slots[t.name] = t.value;
  auto& velocities = opt.velocities();
  const auto& vnames = opt.velocity_names();
  for (size_t i = 0; i < velocities.size(); ++i)
    slots["opt.v." + vnames[i]] = &velocities[i];

  const uint32_t tensor_count = get_u32(is);
  ST3D_CHECK(tensor_count == slots.size(),
             "checkpoint: file has " << tensor_count << " tensors, network expects "
                                     << slots.size());
  for (uint32_t i = 0; i < tensor_count; ++i) {
    const std::string name = get_string(is);
    auto it = slots.find(name);
    ST3D_CHECK(it != slots.end(),
               "checkpoint: tensor '" << name << "' has no slot in this network");
    Tensor<T> loaded = read_tensor<T>(is);
    ST3D_CHECK(loaded.shape() == it->second->shape(),
               "checkpoint: tensor '" << name << "' has shape "
                                      << shape_str(loaded.shape())
                                      << ", network expects "
                                      << shape_str(it->second->shape()));
    *it->second = std::move(loaded);
  }

  auto& sched = opt.schedule();
  const uint32_t scalar_count = get_u32(is);
  for (uint32_t i = 0; i < scalar_count; ++i) {
    const std::string name = get_string(is);
    const double v = get_f64(is);
    if (name == "lr")
      sched.lr = v;
    else if (name == "best_val_loss")
      sched.best = v;
    else
      ST3D_CHECK(false, "checkpoint: unknown scalar '" << name << "'");
  }

  int64_t epoch = 0;
  const uint32_t counter_count = get_u32(is);
  for (uint32_t i = 0; i < counter_count; ++i) {
    const std::string name = get_string(is);
    const int64_t v = static_cast<int64_t>(get_u64(is));
    if (name == "epoch")
      epoch = v;
    else if (name == "drops_done")
      sched.drops_done = static_cast<int>(v);
    else if (name == "stall")
      sched.stall = static_cast<int>(v);
    else
      ST3D_CHECK(false, "checkpoint: unknown counter '" << name << "'");
  }

  rng.deserialize(get_string(is));
  return epoch;
}

#define ST3D_INSTANTIATE(T)                                                 \
  template void save_checkpoint<T>(const std::string&, resnet::Network<T>&, \
                                   SgdOptimizer<T>&, int64_t, const Rng&);  \
  template int64_t load_checkpoint<T>(const std::string&,                  \
                                      resnet::Network<T>&,                 \
                                      SgdOptimizer<T>&, Rng&);

ST3D_INSTANTIATE(float)
ST3D_INSTANTIATE(double)

#undef ST3D_INSTANTIATE

}  // namespace st3d::train
