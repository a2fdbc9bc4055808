#include "s2sp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace s2sp {

namespace {

constexpr char kSep = '\x1f';

std::unordered_map<std::string, int64_t> ngram_counts(const TokenSeq& tokens, int n) {
  std::unordered_map<std::string, int64_t> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key += kSep;
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

int64_t clipped_matches(const TokenSeq& hyp, const TokenSeq& ref, int n) {
  auto hyp_counts = ngram_counts(hyp, n);
  auto ref_counts = ngram_counts(ref, n);
  int64_t matches = 0;
  for (const auto& [gram, count] : hyp_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) matches += std::min(count, it->second);
  }
  return matches;
}

void check_aligned(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs,
                   const char* who) {
  if (hyps.empty()) throw ContractError(std::string(who) + ": empty corpus");
  if (hyps.size() != refs.size())
    throw ContractError(std::string(who) + ": " + std::to_string(hyps.size()) + " hypotheses vs " +
                        std::to_string(refs.size()) + " references");
}

int64_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int64_t> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double f1_of(double precision, double recall) {
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

}  // namespace

double bleu_corpus(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  check_aligned(hyps, refs, "bleu_corpus");

  int64_t matches[4] = {0, 0, 0, 0};
  int64_t totals[4] = {0, 0, 0, 0};
  int64_t hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<int64_t>(hyps[i].size());
    ref_len += static_cast<int64_t>(refs[i].size());
    for (int n = 1; n <= 4; ++n) {
      matches[n - 1] += clipped_matches(hyps[i], refs[i], n);
      totals[n - 1] += std::max<int64_t>(0, static_cast<int64_t>(hyps[i].size()) - n + 1);
    }
  }
  if (hyp_len == 0) return 0.0;

  double log_precision = 0;
  for (int n = 0; n < 4; ++n) {
    if (matches[n] == 0 || totals[n] == 0) return 0.0;
    log_precision += 0.25 * std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
  }
  const double bp =
      hyp_len > ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_precision);
}

RougeScore rouge_n(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, int n) {
  check_aligned(hyps, refs, "rouge_n");
  if (n < 1 || n > 2) throw ContractError("rouge_n: order must be 1 or 2");
  RougeScore total;
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty()) throw ContractError("rouge_n: empty reference at line " + std::to_string(i + 1));
    const int64_t m = clipped_matches(hyps[i], refs[i], n);
    const int64_t hyp_grams = std::max<int64_t>(0, static_cast<int64_t>(hyps[i].size()) - n + 1);
    const int64_t ref_grams = std::max<int64_t>(0, static_cast<int64_t>(refs[i].size()) - n + 1);
    const double p = hyp_grams > 0 ? static_cast<double>(m) / hyp_grams : 0.0;
    const double r = ref_grams > 0 ? static_cast<double>(m) / ref_grams : 0.0;
    total.precision += p;
    total.recall += r;
    total.f1 += f1_of(p, r);
  }
  const double count = static_cast<double>(hyps.size());
  return {total.precision / count, total.recall / count, total.f1 / count};
}

RougeScore rouge_l(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  check_aligned(hyps, refs, "rouge_l");
  RougeScore total;
  for (size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty()) throw ContractError("rouge_l: empty reference at line " + std::to_string(i + 1));
    const double lcs = static_cast<double>(lcs_length(hyps[i], refs[i]));
    const double p = hyps[i].empty() ? 0.0 : lcs / static_cast<double>(hyps[i].size());
    const double r = lcs / static_cast<double>(refs[i].size());
    total.precision += p;
    total.recall += r;
    total.f1 += f1_of(p, r);
  }
  const double count = static_cast<double>(hyps.size());
  return {total.precision / count, total.recall / count, total.f1 / count};
}

std::vector<TokenSeq> tokenize_lines(const std::vector<std::string>& lines) {
  std::vector<TokenSeq> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(split_ws(line));
  return out;
}

}  // namespace s2sp
