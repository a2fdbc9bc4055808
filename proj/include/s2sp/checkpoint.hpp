#pragma once

// Binary checkpoint format (little-endian):
//   magic "S2SP" | u32 version | u64 tensor count |
//   per tensor: u32 name length, UTF-8 name, u32 rank, u64 dims..., f32 data |
//   footer: u64 rng state | u64 step | u8 optimizer flag |
//   optional optimizer block: u64 adam step, u64 tensor count, tensor blocks
//     named "adam.m.<param>" / "adam.v.<param>"
// Loads are all-or-nothing: magic/version/bounds/truncation/trailing-garbage
// checks reject the file before any state is handed out.

#include <optional>
#include <string>
#include <vector>

#include "s2sp/optim.hpp"
#include "s2sp/params.hpp"

namespace s2sp {

inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  std::vector<std::pair<std::string, TensorF>> tensors;
  uint64_t rng_state = 0;
  uint64_t step = 0;
  bool has_optimizer = false;
  uint64_t adam_step = 0;
  std::vector<std::pair<std::string, std::vector<float>>> adam_m, adam_v;

  TensorF find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    return nullptr;
  }
  uint64_t value_hash() const;
};

Checkpoint checkpoint_from_params(const ParamStore& params, uint64_t rng_state, uint64_t step,
                                  const Adam* adam = nullptr);

// Copies checkpoint values into an existing parameter store (names and shapes
// must line up exactly).
void checkpoint_into_params(const Checkpoint& ckpt, const ParamStore& params);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace s2sp
