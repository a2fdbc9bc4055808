#include <doctest.h>

#include <filesystem>
#include <set>
#include <unordered_set>

#include "s2sp/bpe.hpp"
#include "s2sp/lm.hpp"
#include "s2sp/synth_data.hpp"

using namespace s2sp;

namespace {

TaskSpec small_spec() {
  TaskSpec spec;
  spec.vocab_src = spec.vocab_tgt = 16;
  spec.len_min = 3;
  spec.len_max = 8;
  spec.mono_src = 300;
  spec.mono_tgt = 300;
  spec.parallel = 120;
  spec.valid = 40;
  spec.test = 40;
  spec.structure_seed = 11;
  spec.sharpness = 5.0;
  return spec;
}

SynthTask identity_task() {
  TaskSpec spec = small_spec();
  spec.shared_surface = true;
  auto task = SynthTask::build(spec);
  for (int32_t i = 0; i < spec.vocab_src; ++i) task.sigma[i] = i;
  return task;
}

}  // namespace

TEST_SUITE_BEGIN("synth");

TEST_CASE("identity mapping with single-token sentences gives (w, w) pairs") {
  auto task = identity_task();
  CHECK(task.transform("w03") == "w03");
  CHECK(task.transform("w00") == "w00");
}

TEST_CASE("the transform maps tokens and swaps adjacent pairs") {
  auto task = SynthTask::build(small_spec());
  for (int32_t i = 0; i < 16; ++i) task.sigma[i] = i;  // keep the table readable
  CHECK(task.transform("w00 w01 w02 w03") == "X01 X00 X03 X02");
  CHECK(task.transform("w04 w05 w06") == "X05 X04 X06");  // odd tail stays put
}

TEST_CASE("the transform is invertible") {
  auto task = SynthTask::build(small_spec());
  std::vector<int32_t> sigma_inv(task.sigma.size());
  for (size_t i = 0; i < task.sigma.size(); ++i) sigma_inv[task.sigma[i]] = static_cast<int32_t>(i);

  auto corpora = generate(task, 99);
  for (size_t i = 0; i < corpora.parallel_src.size(); ++i) {
    auto words = split_ws(corpora.parallel_tgt[i]);
    for (size_t k = 0; k + 1 < words.size(); k += 2) std::swap(words[k], words[k + 1]);
    std::string back;
    for (size_t k = 0; k < words.size(); ++k) {
      if (k) back += ' ';
      back += task.src_word(sigma_inv[std::stoi(words[k].substr(1))]);
    }
    CHECK(back == corpora.parallel_src[i]);
  }
}

TEST_CASE("the rule-based transform is a perfect model: oracle BLEU is 100") {
  auto task = SynthTask::build(small_spec());
  auto corpora = generate(task, 5);
  std::vector<std::vector<std::string>> hyps, refs;
  for (size_t i = 0; i < corpora.valid_src.size(); ++i) {
    hyps.push_back(split_ws(task.transform(corpora.valid_src[i])));
    refs.push_back(split_ws(corpora.valid_tgt[i]));
  }
  // avoid pulling metrics in: exact string equality is even stronger
  for (size_t i = 0; i < hyps.size(); ++i) CHECK(hyps[i] == refs[i]);
}

TEST_CASE("splits are pairwise disjoint and deterministic") {
  auto task = SynthTask::build(small_spec());
  auto corpora = generate(task, 7);
  std::unordered_set<std::string> all;
  size_t count = 0;
  for (const auto* split : {&corpora.mono_src, &corpora.mono_tgt, &corpora.parallel_src,
                            &corpora.valid_src, &corpora.test_src}) {
    for (const auto& s : *split) {
      all.insert(s);
      ++count;
    }
  }
  CHECK(all.size() == count);

  auto again = generate(task, 7);
  CHECK(again.mono_src == corpora.mono_src);
  CHECK(again.parallel_tgt == corpora.parallel_tgt);
  auto different = generate(task, 8);
  CHECK(different.mono_src != corpora.mono_src);
}

TEST_CASE("corpus sizes follow the spec") {
  auto task = SynthTask::build(small_spec());
  auto corpora = generate(task, 3);
  CHECK(corpora.mono_src.size() == 300);
  CHECK(corpora.mono_tgt.size() == 300);
  CHECK(corpora.parallel_src.size() == 120);
  CHECK(corpora.valid_src.size() == 40);
  CHECK(corpora.test_tgt.size() == 40);
  for (const auto& s : corpora.parallel_src) {
    const auto n = split_ws(s).size();
    CHECK(n >= 3);
    CHECK(n <= 8);
  }
}

TEST_CASE("subsets are nested, sized by rounding, and f=1 is the identity") {
  const size_t n = 100;
  auto full = subset_indices(n, 1.0, 17);
  REQUIRE(full.size() == n);
  for (size_t i = 0; i < n; ++i) CHECK(full[i] == i);

  auto fifth = subset_indices(n, 0.2, 17);
  auto half = subset_indices(n, 0.5, 17);
  CHECK(fifth.size() == 20);
  CHECK(half.size() == 50);
  std::set<size_t> half_set(half.begin(), half.end());
  for (size_t idx : fifth) CHECK(half_set.count(idx) == 1);

  CHECK(subset_indices(10, 0.25, 4).size() == 3);  // round(2.5) -> 3 away from even? llround: 3
  CHECK_THROWS_AS(subset_indices(10, 0.01, 4), ContractError);
}

TEST_CASE("uniform chain optimal perplexity matches the closed form") {
  TaskSpec spec = small_spec();
  spec.sharpness = 0.0;  // every row uniform
  spec.len_min = spec.len_max = 4;  // deterministic length: no hazard entropy
  auto task = SynthTask::build(spec);
  // four uniform token picks (ln V each) plus a certain EOS, over 5 predictions
  const double expect = std::exp(4.0 * std::log(16.0) / 5.0);
  CHECK(optimal_lm_perplexity(task) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("a trained LM approaches the optimal perplexity from above") {
  TaskSpec spec = small_spec();
  spec.mono_src = 5000;
  auto task = SynthTask::build(spec);
  auto corpora = generate(task, 21);

  // word-level BPE: enough merges to fuse every word into one token
  auto freqs = count_words(corpora.mono_src);
  auto table = learn_bpe(freqs, 256);
  auto vocab = Vocab::build(table, freqs);
  Corpus train, valid;
  for (size_t i = 0; i < corpora.mono_src.size(); ++i) {
    auto ids = encode(vocab, table, corpora.mono_src[i]);
    (i % 10 == 0 ? valid : train).push_back(ids);
  }

  LmConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.d_emb = 32;
  cfg.hidden = 128;
  cfg.proj = 32;
  cfg.dropout = 0.0;
  cfg.train.max_steps = 3500;
  cfg.train.batch_size = 32;
  cfg.train.eval_every = 250;
  cfg.train.lr = {1e-2, 0.5, 500, 1000};
  Rng rng(33);
  auto result = train_lm(cfg, train, valid, rng);

  const double floor = optimal_lm_perplexity(task);
  CHECK(result.best_valid_ppl >= floor * 0.98);
  CHECK(result.best_valid_ppl <= floor * 1.10);
}

TEST_CASE("write_corpora emits files and a manifest with stable hashes") {
  auto task = SynthTask::build(small_spec());
  auto corpora = generate(task, 2);
  auto dir = std::filesystem::temp_directory_path() / "s2sp_synth_test";
  std::filesystem::remove_all(dir);
  write_corpora(task, corpora, 2, dir.string());

  for (const char* name : {"mono_src.txt", "mono_tgt.txt", "parallel.src", "parallel.tgt",
                           "valid.src", "valid.tgt", "test.src", "test.tgt", "manifest.json"})
    CHECK(std::filesystem::exists(dir / name));
  auto lines = read_lines((dir / "parallel.src").string());
  CHECK(lines == corpora.parallel_src);
  std::filesystem::remove_all(dir);
}

TEST_SUITE_END();
