#include "s2sp/bpe.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace s2sp {

namespace {

// Splits a UTF-8 string into code points (as byte strings).
std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if ((c & 0x80u) == 0x00u)
      len = 1;
    else if ((c & 0xE0u) == 0xC0u)
      len = 2;
    else if ((c & 0xF0u) == 0xE0u)
      len = 3;
    else if ((c & 0xF8u) == 0xF0u)
      len = 4;
    len = std::min(len, s.size() - i);
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> word_symbols(const std::string& word) {
  if (word.empty()) throw ContractError("BPE word must be nonempty");
  auto symbols = utf8_chars(word);
  symbols.back() += kEndOfWord;
  return symbols;
}

// One exhaustive application of a single merge (repeated leftmost passes
// until the pair no longer occurs).
bool apply_merge(std::vector<std::string>& symbols, const MergePair& merge) {
  bool changed_any = false;
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::string> next;
    next.reserve(symbols.size());
    size_t i = 0;
    while (i < symbols.size()) {
      if (i + 1 < symbols.size() && symbols[i] == merge.first && symbols[i + 1] == merge.second) {
        next.push_back(symbols[i] + symbols[i + 1]);
        i += 2;
        changed = changed_any = true;
      } else {
        next.push_back(symbols[i]);
        ++i;
      }
    }
    symbols = std::move(next);
  }
  return changed_any;
}

}  // namespace

WordFreqs count_words(const std::vector<std::string>& lines) {
  WordFreqs freqs;
  for (const auto& line : lines)
    for (const auto& w : split_ws(line)) ++freqs[w];
  return freqs;
}

MergeTable learn_bpe(const WordFreqs& corpus, int num_merges) {
  if (corpus.empty()) throw ContractError("learn_bpe: empty corpus");
  if (num_merges < 0) throw ContractError("learn_bpe: negative merge count");

  // Working copy: symbol sequences with corpus frequencies.
  std::vector<std::pair<std::vector<std::string>, int64_t>> words;
  words.reserve(corpus.size());
  for (const auto& [word, freq] : corpus) words.emplace_back(word_symbols(word), freq);

  MergeTable table;
  for (int m = 0; m < num_merges; ++m) {
    std::map<MergePair, int64_t> counts;
    for (const auto& [symbols, freq] : words)
      for (size_t i = 0; i + 1 < symbols.size(); ++i)
        counts[{symbols[i], symbols[i + 1]}] += freq;

    // std::map iterates pairs lexicographically, so the first strict maximum
    // is also the lexicographic tie-winner.
    const MergePair* best = nullptr;
    int64_t best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (count > best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (!best || best_count < 2) break;

    table.merges.push_back(*best);
    for (auto& [symbols, freq] : words) apply_merge(symbols, table.merges.back());
  }
  return table;
}

std::vector<std::string> apply_bpe(const MergeTable& table, const std::string& word) {
  auto symbols = word_symbols(word);
  for (const auto& merge : table.merges) {
    if (symbols.size() < 2) break;
    apply_merge(symbols, merge);
  }
  return symbols;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& subwords) {
  Vocab v;
  v.tokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& t : subwords) v.tokens.push_back(t);
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    if (i >= kNumReservedIds && v.ids.count(v.tokens[i]))
      throw ContractError("duplicate vocab token: " + v.tokens[i]);
    v.ids[v.tokens[i]] = static_cast<int32_t>(i);
  }
  return v;
}

Vocab Vocab::build(const MergeTable& table, const WordFreqs& corpus) {
  std::set<std::string> subwords;
  for (const auto& [word, freq] : corpus)
    for (auto& piece : apply_bpe(table, word)) subwords.insert(piece);
  return from_tokens({subwords.begin(), subwords.end()});
}

const std::string& Vocab::token_of(int32_t id) const {
  if (id < 0 || id >= size())
    throw ContractError("token id " + std::to_string(id) + " outside vocab of size " +
                        std::to_string(size()));
  return tokens[id];
}

std::vector<int32_t> encode(const Vocab& vocab, const MergeTable& table, const std::string& sentence) {
  std::vector<int32_t> out = {kBosId};
  for (const auto& word : split_ws(sentence))
    for (const auto& piece : apply_bpe(table, word)) out.push_back(vocab.id_of(piece));
  out.push_back(kEosId);
  return out;
}

std::string decode(const Vocab& vocab, const std::vector<int32_t>& ids) {
  std::string text;
  for (int32_t id : ids) {
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    text += vocab.token_of(id);
  }
  // end-of-word markers become spaces
  std::string out;
  size_t pos = 0;
  const std::string marker = kEndOfWord;
  while (pos < text.size()) {
    const size_t hit = text.find(marker, pos);
    if (hit == std::string::npos) {
      out += text.substr(pos);
      break;
    }
    out += text.substr(pos, hit - pos);
    out += ' ';
    pos = hit + marker.size();
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

void save_merges(const std::string& path, const MergeTable& table) {
  std::vector<std::string> lines;
  lines.push_back("# bpe merge table, one merge per line: left right");
  for (const auto& [left, right] : table.merges) lines.push_back(left + " " + right);
  write_lines(path, lines);
}

MergeTable load_merges(const std::string& path) {
  MergeTable table;
  for (const auto& line : read_lines(path)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size())
      throw IoError("malformed merge line in " + path + ": '" + line + "'");
    table.merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return table;
}

void save_vocab(const std::string& path, const Vocab& vocab) {
  std::vector<std::string> lines(vocab.tokens.begin() + kNumReservedIds, vocab.tokens.end());
  write_lines(path, lines);
}

Vocab load_vocab(const std::string& path) {
  return Vocab::from_tokens(read_lines(path));
}

}  // namespace s2sp
