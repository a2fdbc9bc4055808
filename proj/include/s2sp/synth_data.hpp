#pragma once

// Deterministic synthetic translation tasks: source sentences from an
// order-1 Markov chain, targets via a token bijection plus adjacent-pair
// swaps. The pair swap keeps the task out of reach of a memoryless token
// mapper, so context and attention carry measurable signal.

#include <cstdint>
#include <string>
#include <vector>

#include "s2sp/common.hpp"

namespace s2sp {

struct TaskSpec {
  int32_t vocab_src = 64;
  int32_t vocab_tgt = 64;  // must equal vocab_src (token mapping is a bijection)
  int len_min = 5;
  int len_max = 20;
  int64_t mono_src = 50000;
  int64_t mono_tgt = 50000;
  int64_t parallel = 2000;
  int64_t valid = 500;
  int64_t test = 500;
  uint64_t structure_seed = 7;  // fixes the transition matrix and bijection
  double sharpness = 6.0;       // transition concentration; 0 = uniform chain
  bool shared_surface = false;  // target words reuse source surfaces (tied-LM tasks)

  void validate() const;
};

// Realized task: transition matrix, bijection and surface forms.
struct SynthTask {
  TaskSpec spec;
  std::vector<double> transition;  // [V x V], rows sum to 1
  std::vector<int32_t> sigma;      // bijection on token indices

  static SynthTask build(const TaskSpec& spec);

  std::string src_word(int32_t id) const;
  std::string tgt_word(int32_t id) const;

  // sigma applied tokenwise, then positions (2i, 2i+1) swapped.
  std::string transform(const std::string& src_sentence) const;
};

struct GeneratedCorpora {
  std::vector<std::string> mono_src, mono_tgt;
  std::vector<std::string> parallel_src, parallel_tgt;
  std::vector<std::string> valid_src, valid_tgt;
  std::vector<std::string> test_src, test_tgt;
};

// Samples all splits deterministically from `seed`. Splits are disjoint by
// construction: every sampled source sentence is globally unique.
GeneratedCorpora generate(const SynthTask& task, uint64_t seed);

// Deterministic nested subsets: subset(f1) is a prefix (under a fixed random
// key order) of subset(f2) whenever f1 <= f2. Returned indices are ascending.
std::vector<size_t> subset_indices(size_t corpus_size, double fraction, uint64_t seed);

// exp of the optimal per-token NLL of the sentence process (first-token
// entropy, chain transitions and the length hazard), the information floor
// for any LM trained on this task.
double optimal_lm_perplexity(const SynthTask& task);

// Writes the eight corpus files plus manifest.json (spec, seed, file hashes).
void write_corpora(const SynthTask& task, const GeneratedCorpora& corpora, uint64_t seed,
                   const std::string& dir);

}  // namespace s2sp
