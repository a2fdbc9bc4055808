#include "s2sp/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

namespace s2sp {

namespace {

std::string surface(char prefix, int32_t id, int32_t vocab) {
  int width = 1;
  for (int32_t v = vocab - 1; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(id);
  return prefix + std::string(width - digits.size(), '0') + digits;
}

int32_t parse_word(const std::string& word, char prefix) {
  if (word.empty() || word[0] != prefix)
    throw ContractError("synthetic word '" + word + "' lacks prefix '" + std::string(1, prefix) + "'");
  return static_cast<int32_t>(std::stoi(word.substr(1)));
}

std::vector<std::string> sample_unique_sources(const SynthTask& task, int64_t count, Rng& rng,
                                               std::unordered_set<std::string>& seen) {
  const auto& spec = task.spec;
  const int32_t v = spec.vocab_src;
  std::vector<std::string> out;
  out.reserve(count);
  while (static_cast<int64_t>(out.size()) < count) {
    const int len = spec.len_min + static_cast<int>(rng.below(spec.len_max - spec.len_min + 1));
    std::string sentence;
    int32_t state = static_cast<int32_t>(rng.below(v));
    for (int k = 0; k < len; ++k) {
      if (k > 0) {
        const double u = rng.next_unit();
        const double* row = task.transition.data() + static_cast<size_t>(state) * v;
        double acc = 0;
        int32_t next = v - 1;
        for (int32_t j = 0; j < v; ++j) {
          acc += row[j];
          if (u < acc) {
            next = j;
            break;
          }
        }
        state = next;
      }
      if (k > 0) sentence += ' ';
      sentence += task.src_word(state);
    }
    if (seen.insert(sentence).second) out.push_back(std::move(sentence));
  }
  return out;
}

}  // namespace

void TaskSpec::validate() const {
  if (vocab_src != vocab_tgt)
    throw ContractError("task spec: the token bijection needs vocab_src == vocab_tgt");
  if (vocab_src < 2) throw ContractError("task spec: vocabulary too small");
  if (len_min < 1 || len_max < len_min) throw ContractError("task spec: bad length range");
  if (mono_src < 1 || mono_tgt < 1 || parallel < 1 || valid < 1 || test < 1)
    throw ContractError("task spec: all corpus sizes must be >= 1");
  if (sharpness < 0) throw ContractError("task spec: sharpness must be >= 0");
}

SynthTask SynthTask::build(const TaskSpec& spec) {
  spec.validate();
  SynthTask task;
  task.spec = spec;
  Rng rng(spec.structure_seed);
  const int32_t v = spec.vocab_src;

  task.transition.resize(static_cast<size_t>(v) * v);
  for (int32_t i = 0; i < v; ++i) {
    double* row = task.transition.data() + static_cast<size_t>(i) * v;
    double denom = 0;
    for (int32_t j = 0; j < v; ++j) {
      row[j] = std::exp(spec.sharpness * rng.next_unit());
      denom += row[j];
    }
    for (int32_t j = 0; j < v; ++j) row[j] /= denom;
  }

  task.sigma.resize(v);
  std::iota(task.sigma.begin(), task.sigma.end(), 0);
  for (int32_t i = v; i > 1; --i)
    std::swap(task.sigma[i - 1], task.sigma[rng.below(static_cast<uint64_t>(i))]);
  return task;
}

std::string SynthTask::src_word(int32_t id) const { return surface('w', id, spec.vocab_src); }

std::string SynthTask::tgt_word(int32_t id) const {
  return surface(spec.shared_surface ? 'w' : 'X', id, spec.vocab_tgt);
}

std::string SynthTask::transform(const std::string& src_sentence) const {
  auto words = split_ws(src_sentence);
  std::vector<std::string> mapped(words.size());
  for (size_t i = 0; i < words.size(); ++i)
    mapped[i] = tgt_word(sigma[parse_word(words[i], 'w')]);
  for (size_t i = 0; i + 1 < mapped.size(); i += 2) std::swap(mapped[i], mapped[i + 1]);
  return join_ws(mapped);
}

GeneratedCorpora generate(const SynthTask& task, uint64_t seed) {
  Rng rng(seed);
  std::unordered_set<std::string> seen;
  GeneratedCorpora out;

  auto make_pairs = [&](int64_t count, std::vector<std::string>& src, std::vector<std::string>& tgt) {
    src = sample_unique_sources(task, count, rng, seen);
    tgt.reserve(count);
    for (const auto& s : src) tgt.push_back(task.transform(s));
    if (task.spec.shared_surface)
      for (const auto& t : tgt) seen.insert(t);
  };

  make_pairs(task.spec.parallel, out.parallel_src, out.parallel_tgt);
  make_pairs(task.spec.valid, out.valid_src, out.valid_tgt);
  make_pairs(task.spec.test, out.test_src, out.test_tgt);
  out.mono_src = sample_unique_sources(task, task.spec.mono_src, rng, seen);
  // target-side monolingual text comes from held-out source samples
  auto held_out = sample_unique_sources(task, task.spec.mono_tgt, rng, seen);
  out.mono_tgt.reserve(held_out.size());
  for (const auto& s : held_out) out.mono_tgt.push_back(task.transform(s));
  if (task.spec.shared_surface)
    for (const auto& t : out.mono_tgt) seen.insert(t);
  return out;
}

std::vector<size_t> subset_indices(size_t corpus_size, double fraction, uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw ContractError("subset: fraction must be in (0, 1]");
  const auto take = static_cast<size_t>(std::llround(fraction * static_cast<double>(corpus_size)));
  if (take < 1) throw ContractError("subset: fraction * size rounds below one sentence");

  Rng rng(seed);
  std::vector<std::pair<uint64_t, size_t>> keyed(corpus_size);
  for (size_t i = 0; i < corpus_size; ++i) keyed[i] = {rng.next_u64(), i};
  std::sort(keyed.begin(), keyed.end());
  std::vector<size_t> picked(take);
  for (size_t i = 0; i < take; ++i) picked[i] = keyed[i].second;
  std::sort(picked.begin(), picked.end());
  return picked;
}

double optimal_lm_perplexity(const SynthTask& task) {
  const auto& spec = task.spec;
  const int32_t v = spec.vocab_src;
  const int a = spec.len_min, b = spec.len_max;
  const double span = static_cast<double>(b - a + 1);

  std::vector<double> row_entropy(v, 0.0);
  for (int32_t i = 0; i < v; ++i) {
    const double* row = task.transition.data() + static_cast<size_t>(i) * v;
    for (int32_t j = 0; j < v; ++j)
      if (row[j] > 0) row_entropy[i] -= row[j] * std::log(row[j]);
  }

  // state distribution at position k, starting uniform
  std::vector<double> pi(v, 1.0 / v), next(v);
  double total_nll = std::log(static_cast<double>(v));  // first token
  double total_tokens = 1.0;
  for (int k = 1; k <= b; ++k) {
    const double reach = k <= a ? 1.0 : (b - k + 1) / span;          // P(L >= k)
    const double hazard = k < a ? 0.0 : 1.0 / (b - k + 1);           // P(L = k | L >= k)
    double h_bin = 0.0;
    if (hazard > 0.0 && hazard < 1.0)
      h_bin = -hazard * std::log(hazard) - (1 - hazard) * std::log(1 - hazard);
    double expected_row_h = 0.0;
    for (int32_t i = 0; i < v; ++i) expected_row_h += pi[i] * row_entropy[i];

    // the prediction made after k observed tokens: EOS vs next chain token
    total_nll += reach * (h_bin + (1.0 - hazard) * expected_row_h);
    total_tokens += reach;

    std::fill(next.begin(), next.end(), 0.0);
    for (int32_t i = 0; i < v; ++i) {
      const double* row = task.transition.data() + static_cast<size_t>(i) * v;
      for (int32_t j = 0; j < v; ++j) next[j] += pi[i] * row[j];
    }
    pi.swap(next);
  }
  return std::exp(total_nll / total_tokens);
}

void write_corpora(const SynthTask& task, const GeneratedCorpora& corpora, uint64_t seed,
                   const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, const std::vector<std::string>*>> files = {
      {"mono_src.txt", &corpora.mono_src},   {"mono_tgt.txt", &corpora.mono_tgt},
      {"parallel.src", &corpora.parallel_src}, {"parallel.tgt", &corpora.parallel_tgt},
      {"valid.src", &corpora.valid_src},     {"valid.tgt", &corpora.valid_tgt},
      {"test.src", &corpora.test_src},       {"test.tgt", &corpora.test_tgt},
  };
  nlohmann::json hashes;
  for (const auto& [name, lines] : files) {
    write_lines((fs::path(dir) / name).string(), *lines);
    uint64_t h = 0xCBF29CE484222325ull;
    const char nl = '\n';
    for (const auto& line : *lines) {
      h = fnv1a64(line.data(), line.size(), h);
      h = fnv1a64(&nl, 1, h);
    }
    hashes[name] = hex64(h);
  }

  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["spec"] = {{"vocab_src", task.spec.vocab_src},
                      {"vocab_tgt", task.spec.vocab_tgt},
                      {"len_min", task.spec.len_min},
                      {"len_max", task.spec.len_max},
                      {"mono_src", task.spec.mono_src},
                      {"mono_tgt", task.spec.mono_tgt},
                      {"parallel", task.spec.parallel},
                      {"valid", task.spec.valid},
                      {"test", task.spec.test},
                      {"structure_seed", task.spec.structure_seed},
                      {"sharpness", task.spec.sharpness},
                      {"shared_surface", task.spec.shared_surface}};
  manifest["files"] = hashes;
  manifest["optimal_lm_perplexity"] = optimal_lm_perplexity(task);

  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

}  // namespace s2sp
