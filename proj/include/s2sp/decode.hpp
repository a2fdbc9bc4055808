#pragma once

// Beam search and greedy decoding (eval mode, no tape). Scores are sums of
// token log-probabilities computed in f64 from the f32 logits. Ties break
// deterministically: higher score, then lower token id at expansion time;
// final winners prefer shorter, then lexicographically smaller sequences.

#include <vector>

#include "s2sp/seq2seq.hpp"

namespace s2sp {

struct Hypothesis {
  std::vector<int32_t> tokens;  // starts with BOS; finished ones end with EOS
  double score = 0.0;           // sum of emitted-token log-probs
  bool finished = false;
  bool truncated = false;  // hit max_len before EOS

  int64_t emitted() const { return static_cast<int64_t>(tokens.size()) - 1; }
};

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> beam;  // completed pool plus surviving live rows
};

// max_len caps the number of emitted tokens (EOS included).
BeamResult beam_search(const Seq2Seq& model, const std::vector<int32_t>& src_ids, int beam,
                       int max_len, bool length_norm = false);

Hypothesis greedy_decode(const Seq2Seq& model, const std::vector<int32_t>& src_ids, int max_len);

// 2 * source length + 10.
int default_max_len(const std::vector<int32_t>& src_ids);

// Decodes a corpus, optionally across threads (S2SP_THREADS caps the worker
// count; results are ordered by input index regardless of scheduling).
std::vector<Hypothesis> decode_corpus(const Seq2Seq& model, const Corpus& src, int beam,
                                      bool length_norm = false, int threads = 0);

// Worker cap from the S2SP_THREADS environment variable (defaults to the
// hardware concurrency when unset).
int eval_thread_cap();

}  // namespace s2sp
