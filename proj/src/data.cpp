#include "s2sp/data.hpp"

#include <algorithm>
#include <numeric>

namespace s2sp {

Batch pad_batch(const std::vector<std::vector<int32_t>>& seqs) {
  if (seqs.empty()) throw ContractError("pad_batch: empty batch");
  Batch out;
  out.batch = static_cast<int64_t>(seqs.size());
  for (const auto& s : seqs) out.time = std::max<int64_t>(out.time, static_cast<int64_t>(s.size()));
  if (out.time == 0) throw ContractError("pad_batch: all sequences empty");
  out.ids.assign(out.batch * out.time, kPadId);
  for (int64_t b = 0; b < out.batch; ++b)
    std::copy(seqs[b].begin(), seqs[b].end(), out.ids.begin() + b * out.time);
  return out;
}

std::vector<std::vector<size_t>> epoch_batches(size_t corpus_size, size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ContractError("epoch_batches: batch_size must be positive");
  std::vector<size_t> order(corpus_size);
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t i = corpus_size; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<size_t>> batches;
  for (size_t start = 0; start < corpus_size; start += batch_size) {
    const size_t end = std::min(corpus_size, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

}  // namespace s2sp
