#pragma once

// Corpus-level BLEU (multi-bleu semantics, single reference, case-sensitive,
// no smoothing) and full-length ROUGE-1/2/L.

#include <string>
#include <vector>

#include "s2sp/common.hpp"

namespace s2sp {

using TokenSeq = std::vector<std::string>;

// Modified n-gram precisions summed over the corpus (n = 1..4), geometric
// mean, times the brevity penalty, times 100. Any zero precision gives 0.
double bleu_corpus(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs);

struct RougeScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Clipped n-gram overlap, n in {1, 2}; corpus scores are means of the
// per-example values.
RougeScore rouge_n(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, int n);

// Longest common subsequence variant (beta = 1).
RougeScore rouge_l(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs);

// Whitespace-tokenizes one line per entry.
std::vector<TokenSeq> tokenize_lines(const std::vector<std::string>& lines);

}  // namespace s2sp
