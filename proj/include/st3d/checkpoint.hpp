#pragma once

#include <string>

#include "st3d/trainer.hpp"

namespace st3d::train {

// Checkpoint file: magic "STCK", format version u32 LE, then counted
// sections: named tensors (u32 name length + UTF-8 name + tensor in the
// "STT1" binary format), named f64 optimizer scalars, named i64 schedule
// counters, and the RNG state blob. Named tensors cover the trainable
// parameters, the BN running stats, and one velocity per parameter under
// "opt.v.<param>". Round trips are byte-exact.
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, resnet::Network<T>& net,
                     SgdOptimizer<T>& opt, int64_t epoch, const Rng& rng);

// Loads into an already-built network/optimizer pair of matching
// architecture; returns the stored epoch index. A tensor whose name or
// shape does not line up fails with a message naming the first offender.
template <typename T>
int64_t load_checkpoint(const std::string& path, resnet::Network<T>& net,
                        SgdOptimizer<T>& opt, Rng& rng);

}  // namespace st3d::train
