#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2sp/common.hpp"

namespace s2sp {

// Reserved token ids, fixed repo-wide.
inline constexpr int32_t kPadId = 0;
inline constexpr int32_t kBosId = 1;
inline constexpr int32_t kEosId = 2;
inline constexpr int32_t kUnkId = 3;
inline constexpr int32_t kNumReservedIds = 4;

// A padded [batch x time] matrix of token ids, row-major.
struct Batch {
  int64_t batch = 0;
  int64_t time = 0;
  std::vector<int32_t> ids;

  int32_t at(int64_t b, int64_t t) const { return ids[b * time + t]; }

  // 1 where the id is a real token, 0 on padding.
  std::vector<uint8_t> live_mask() const {
    std::vector<uint8_t> m(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != kPadId;
    return m;
  }
};

// Right-pads sequences with PAD to the longest one.
Batch pad_batch(const std::vector<std::vector<int32_t>>& seqs);

// Deterministic minibatch order for one epoch: shuffles sentence indices with
// the given rng and cuts them into runs of batch_size (last one may be short).
std::vector<std::vector<size_t>> epoch_batches(size_t corpus_size, size_t batch_size, Rng& rng);

}  // namespace s2sp
