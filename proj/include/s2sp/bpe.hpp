#pragma once

// Byte-pair encoding: greedy merge learning over a weighted word corpus and
// deterministic application. Words are split into UTF-8 code points with the
// end-of-word marker "</w>" attached to the last one.

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "s2sp/data.hpp"

namespace s2sp {

inline constexpr const char* kEndOfWord = "</w>";

using MergePair = std::pair<std::string, std::string>;

struct MergeTable {
  std::vector<MergePair> merges;  // learning order; no duplicate pairs
};

using WordFreqs = std::map<std::string, int64_t>;

// Word-frequency map of whitespace-tokenized lines.
WordFreqs count_words(const std::vector<std::string>& lines);

// Greedy BPE learning: repeatedly merge the most frequent adjacent symbol
// pair, ties broken by lexicographic order of (left, right). Stops early when
// no pair occurs at least twice.
MergeTable learn_bpe(const WordFreqs& corpus, int num_merges);

// Splits to code points + end-of-word marker, then applies the merges in
// table order, each one exhaustively. Deterministic.
std::vector<std::string> apply_bpe(const MergeTable& table, const std::string& word);

struct Vocab {
  std::vector<std::string> tokens;  // index == id; ids 0..3 are reserved
  std::unordered_map<std::string, int32_t> ids;

  static Vocab from_tokens(const std::vector<std::string>& subwords);
  // Applies the merge table to every corpus word and collects the resulting
  // subwords in sorted order.
  static Vocab build(const MergeTable& table, const WordFreqs& corpus);

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }
  int32_t id_of(const std::string& token) const {
    auto it = ids.find(token);
    return it == ids.end() ? kUnkId : it->second;
  }
  const std::string& token_of(int32_t id) const;
};

// Whitespace-tokenizes, BPE-splits and maps to ids wrapped in BOS/EOS.
// Unknown subwords map to UNK.
std::vector<int32_t> encode(const Vocab& vocab, const MergeTable& table, const std::string& sentence);

// Inverts encode when no UNK is present: strips specials, joins subwords and
// turns end-of-word markers back into spaces.
std::string decode(const Vocab& vocab, const std::vector<int32_t>& ids);

// Merge-table file: one merge per line, "left right", UTF-8; '#' comments.
void save_merges(const std::string& path, const MergeTable& table);
MergeTable load_merges(const std::string& path);

// Vocab file: one non-reserved token per line, id = line index + 4.
void save_vocab(const std::string& path, const Vocab& vocab);
Vocab load_vocab(const std::string& path);

}  // namespace s2sp
