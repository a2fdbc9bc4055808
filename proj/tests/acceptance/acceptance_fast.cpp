// Acceptance criteria that run in seconds: gradient correctness, transfer
// exactness, the attention contract, beam-search optimality, metric oracles,
// determinism/persistence and BPE correctness.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include "s2sp/harness.hpp"
#include "support.hpp"

using namespace s2sp;
using acceptance::fmt2;
using acceptance::require;
namespace fs = std::filesystem;

namespace {

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// --- criterion 1 -----------------------------------------------------------

std::string gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  Seq2SeqConfig cfg;
  cfg.src_vocab = 8;
  cfg.tgt_vocab = 8;
  cfg.d_emb = 4;
  cfg.hidden = 6;
  cfg.proj = 4;
  cfg.upper_hidden = 5;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.dropout = 0.0;
  LmConfig donor_cfg;
  donor_cfg.vocab_size = 8;
  donor_cfg.d_emb = 4;
  donor_cfg.hidden = 6;
  donor_cfg.proj = 4;

  double worst = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    auto model = make_finetune_model<double>(cfg, rng);

    // random batches with T <= 5 (BOS + up to 3 tokens + EOS)
    auto random_sentence = [&](int max_body) {
      std::vector<int32_t> ids = {kBosId};
      const int body = 1 + static_cast<int>(rng.below(max_body));
      for (int i = 0; i < body; ++i) ids.push_back(4 + static_cast<int32_t>(rng.below(4)));
      ids.push_back(kEosId);
      return ids;
    };
    auto src = pad_batch({random_sentence(3), random_sentence(3)});
    auto tgt = pad_batch({random_sentence(3), random_sentence(3)});
    auto src_mono = pad_batch({random_sentence(3), random_sentence(3)});
    auto tgt_mono = pad_batch({random_sentence(3), random_sentence(3)});

    auto joint = [&](TapeT<double>* tape) {
      Rng no_rng(0);
      return joint_loss<double>(tape, model, &src, &tgt, &src_mono, &tgt_mono, {1.0, 1.0, 1.0},
                                DropoutSpec(0.0), false, &no_rng)
          .total;
    };

    ParamStoreT<double> params;
    register_finetune_params(params, model);
    for (const auto& [name, param] : params.items()) {
      auto f = [&](TapeT<double>* tape, const TensorPtr<double>&) { return joint(tape); };
      worst = std::max(worst, finite_diff_check<double>(f, param, 1e-3));
    }
  }
  require(worst < 1e-4, "max relative error " + std::to_string(worst) + " >= 1e-4");
  const double secs = elapsed_since(start);
  require(secs < 60.0, "took " + fmt2(secs) + "s, budget is 60s");
  return "max rel err " + std::to_string(worst) + " over 20 seeds, all joint-loss parameters";
}

// --- criterion 2 -----------------------------------------------------------

std::string transfer_exactness() {
  Seq2SeqConfig cfg;
  cfg.src_vocab = 30;
  cfg.tgt_vocab = 34;
  cfg.d_emb = 8;
  cfg.hidden = 16;
  cfg.proj = 8;
  cfg.upper_hidden = 12;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  LmConfig src_cfg{30, 8, 16, 8, 0.0, {}};
  LmConfig tgt_cfg{34, 8, 16, 8, 0.0, {}};

  Rng rng(5);
  auto model = make_finetune_model<float>(cfg, rng);
  auto src_lm = make_language_model<float>(src_cfg, rng);
  auto tgt_lm = make_language_model<float>(tgt_cfg, rng);
  auto report = init_from_lms(model, src_lm, tgt_lm, AblationMode::named("full"));

  auto hash_of = [](const TensorF& t) { return fnv1a64(t->data.data(), t->data.size() * sizeof(float)); };
  require(report.transferred_count() == 14, "expected 14 transferred tensors");
  const std::vector<std::pair<TensorF, TensorF>> pairs = {
      {model.seq2seq.enc_embedding.table, src_lm.embedding.table},
      {model.seq2seq.enc_layers[0].w_x, src_lm.lstm1.w_x},
      {model.seq2seq.enc_layers[0].w_h, src_lm.lstm1.w_h},
      {model.seq2seq.enc_layers[0].b, src_lm.lstm1.b},
      {model.seq2seq.enc_layers[0].w_proj, src_lm.lstm1.w_proj},
      {model.seq2seq.dec_embedding.table, tgt_lm.embedding.table},
      {model.seq2seq.dec_layers[0].w_x, tgt_lm.lstm1.w_x},
      {model.seq2seq.dec_layers[0].w_h, tgt_lm.lstm1.w_h},
      {model.seq2seq.dec_layers[0].b, tgt_lm.lstm1.b},
      {model.seq2seq.dec_layers[0].w_proj, tgt_lm.lstm1.w_proj},
      {model.seq2seq.dec_softmax.w, tgt_lm.softmax.w},
      {model.seq2seq.dec_softmax.b, tgt_lm.softmax.b},
      {model.aux_src_softmax.w, src_lm.softmax.w},
      {model.aux_src_softmax.b, src_lm.softmax.b},
  };
  for (const auto& [dst, src] : pairs)
    require(hash_of(dst) == hash_of(src), "transferred tensor not bit-equal to its donor");

  // the LM losses through the seq2seq paths equal the standalone donor losses
  Rng sent_rng(7);
  auto sentence = [&](int32_t vocab) {
    std::vector<int32_t> ids = {kBosId};
    for (int i = 0; i < 6; ++i) ids.push_back(4 + static_cast<int32_t>(sent_rng.below(vocab - 4)));
    ids.push_back(kEosId);
    return ids;
  };
  auto tgt_mono = pad_batch({sentence(34), sentence(34), sentence(34)});
  auto src_mono = pad_batch({sentence(30), sentence(30)});
  auto src_par = pad_batch({sentence(30)});
  auto tgt_par = pad_batch({sentence(34)});

  Rng r0(0), r1(0), r2(0);
  auto joint = joint_loss<float>(nullptr, model, &src_par, &tgt_par, &src_mono, &tgt_mono,
                                 {1.0, 1.0, 1.0}, DropoutSpec(0.0), false, &r0);
  auto donor_tgt = lm_loss<float>(nullptr, tgt_lm, tgt_mono, DropoutSpec(0.0), false, &r1);
  auto donor_src = lm_loss<float>(nullptr, src_lm, src_mono, DropoutSpec(0.0), false, &r2);
  require(joint.tgt_lm_loss->scalar() == donor_tgt.loss->scalar(),
          "target LM loss differs from the standalone donor loss");
  require(joint.src_lm_loss->scalar() == donor_src.loss->scalar(),
          "source LM loss differs from the standalone donor loss");
  return "14 tensors hash-equal; LM-path losses bit-equal to donors";
}

// --- criterion 3 -----------------------------------------------------------

std::string attention_contract() {
  double worst_sum_err = 0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Seq2SeqConfig cfg;
    cfg.src_vocab = 20;
    cfg.tgt_vocab = 20;
    cfg.d_emb = 6;
    cfg.hidden = 10;
    cfg.proj = 6;
    cfg.upper_hidden = 8;
    cfg.enc_layers = 2;
    cfg.dec_layers = 2;
    Rng rng(seed);
    auto model = make_seq2seq<float>(cfg, rng);

    auto src = pad_batch({{kBosId, 4, 5, 6, 7, kEosId},
                          {kBosId, 8, 9, kEosId, kPadId, kPadId},
                          {kBosId, 10, kEosId, kPadId, kPadId, kPadId}});
    auto tgt = pad_batch({{kBosId, 11, 12, kEosId}, {kBosId, 13, kEosId, kPadId},
                          {kBosId, 14, 15, kEosId}});
    Rng r0(0);
    auto fwd = seq2seq_forward<float>(nullptr, model, src, tgt, DropoutSpec(0.0), false, &r0);
    const int64_t rows = fwd.alpha->shape[0], t_src = fwd.alpha->shape[1];
    for (int64_t r = 0; r < rows; ++r) {
      double sum = 0;
      for (int64_t t = 0; t < t_src; ++t) sum += fwd.alpha->data[r * t_src + t];
      worst_sum_err = std::max(worst_sum_err, std::abs(sum - 1.0));
    }

    // perturbing PAD-fed (masked) encoder inputs must not move any logit
    auto before = fwd.logits->data;
    for (int64_t j = 0; j < model.enc_embedding.dim(); ++j)
      model.enc_embedding.table->data[kPadId * model.enc_embedding.dim() + j] += 1000.0f;
    Rng r1(0);
    auto after = seq2seq_forward<float>(nullptr, model, src, tgt, DropoutSpec(0.0), false, &r1);
    require(before == after.logits->data, "masked-position perturbation changed logits");
  }
  require(worst_sum_err < 1e-6, "attention row sum off by " + std::to_string(worst_sum_err));

  // T=1 source: context is exactly [h1; hN]
  EncoderStatesT<float> enc;
  enc.batch = 1;
  enc.time = 1;
  enc.mask = {1};
  Rng rng(3);
  enc.h_first = uniform_tensor<float>({1, 5}, rng, -1, 1, false);
  enc.h_last = uniform_tensor<float>({1, 5}, rng, -1, 1, false);
  auto q = uniform_tensor<float>({1, 5}, rng, -1, 1, false);
  auto att = attend<float>(nullptr, q, enc);
  require(att.alpha->data == std::vector<float>{1.0f}, "T=1 alpha != 1");
  std::vector<float> expect = enc.h_first->data;
  expect.insert(expect.end(), enc.h_last->data.begin(), enc.h_last->data.end());
  require(att.context->data == expect, "T=1 context != [h1; hN]");
  return "alpha sums within " + std::to_string(worst_sum_err) + "; mask invariance bit-exact";
}

// --- criterion 4 -----------------------------------------------------------

std::string beam_search_optimality() {
  const auto start = std::chrono::steady_clock::now();
  Seq2SeqConfig cfg;
  cfg.src_vocab = 8;
  cfg.tgt_vocab = 4;  // reserved ids only: 4^3 = 64 rollouts at max_len 3
  cfg.d_emb = 4;
  cfg.hidden = 6;
  cfg.proj = 4;
  cfg.upper_hidden = 5;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  Rng rng(7);
  auto model = make_seq2seq<float>(cfg, rng);
  ParamStore params;
  register_seq2seq_params(params, model);
  Adam adam(params);
  auto src = pad_batch({{kBosId, 4, 5, kEosId}, {kBosId, 6, 7, kEosId}});
  auto tgt = pad_batch({{kBosId, 3, 3, kEosId}, {kBosId, 3, kEosId, kPadId}});
  Rng train_rng(9);
  for (int step = 0; step < 60; ++step) {
    Tape tape;
    params.zero_grads();
    auto loss = seq2seq_loss<float>(&tape, model, src, tgt, DropoutSpec(0.0), true, &train_rng);
    tape.backward(loss.loss);
    clip_global_norm(params, 5.0);
    adam.step(params, 5e-3);
  }

  const std::vector<int32_t> sentence = {kBosId, 4, 5, kEosId};
  const int max_len = 3;

  // exhaustive oracle: score every rollout by stepping the model
  Rng no_rng(0);
  auto enc = encode<float>(nullptr, model, pad_batch({sentence}), DropoutSpec(0.0), false, &no_rng);
  struct Node {
    Hypothesis hyp;
    DecoderState state;
  };
  std::vector<Node> frontier;
  frontier.push_back({{{kBosId}, 0.0, false, false}, initial_decoder_state(model, 1)});
  std::vector<Hypothesis> all;
  for (int t = 0; t < max_len; ++t) {
    std::vector<Node> next;
    for (auto& node : frontier) {
      auto state = node.state;
      auto logits = decode_step<float>(nullptr, model, {node.hyp.tokens.back()}, state, enc,
                                       DropoutSpec(0.0), false, &no_rng);
      double mx = logits->data[0];
      for (int j = 1; j < 4; ++j) mx = std::max(mx, static_cast<double>(logits->data[j]));
      double denom = 0;
      for (int j = 0; j < 4; ++j) denom += std::exp(static_cast<double>(logits->data[j]) - mx);
      for (int32_t j = 0; j < 4; ++j) {
        Hypothesis h = node.hyp;
        h.tokens.push_back(j);
        h.score += static_cast<double>(logits->data[j]) - mx - std::log(denom);
        if (j == kEosId || t + 1 == max_len) {
          h.finished = j == kEosId;
          all.push_back(h);
        } else {
          next.push_back({h, state});
        }
      }
    }
    frontier = std::move(next);
  }
  auto better = [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return a.tokens < b.tokens;
  };
  std::sort(all.begin(), all.end(), better);
  const Hypothesis& oracle = all.front();

  auto wide = beam_search(model, sentence, 64, max_len);
  require(wide.best.tokens == oracle.tokens, "beam 64 missed the exhaustive argmax sequence");
  require(std::abs(wide.best.score - oracle.score) < 1e-6, "beam 64 score differs from the oracle");

  auto greedy = greedy_decode(model, sentence, max_len);
  auto beam1 = beam_search(model, sentence, 1, max_len);
  require(greedy.tokens == beam1.best.tokens && greedy.score == beam1.best.score,
          "beam 1 differs from greedy");

  double prev = -1e300;
  for (int beam : {1, 2, 4, 8, 16, 32, 64}) {
    auto r = beam_search(model, sentence, beam, max_len);
    require(r.best.score >= prev - 1e-12, "best score decreased when widening the beam");
    prev = r.best.score;
  }
  const double secs = elapsed_since(start);
  require(secs < 60.0, "took " + fmt2(secs) + "s, budget is 60s");
  return "beam 64 equals exhaustive argmax over " + std::to_string(all.size()) + " rollouts";
}

// --- criterion 5 -----------------------------------------------------------

std::string metric_oracles() {
  std::vector<TokenSeq> corpus = {{"the", "quick", "brown", "fox", "jumps"},
                                  {"over", "the", "lazy", "dog", "today"}};
  require(std::abs(bleu_corpus(corpus, corpus) - 100.0) < 1e-9, "BLEU(x,x) != 100");
  require(bleu_corpus({{"the", "the", "the", "the"}}, {{"the", "cat"}}) == 0.0,
          "clipped-precision example is not 0");
  auto r1 = rouge_n({{"a", "b", "c"}}, {{"a", "c", "d"}}, 1);
  require(std::abs(r1.f1 - 2.0 / 3.0) < 1e-9, "ROUGE-1 F1 != 2/3");
  auto rl = rouge_l({{"a", "b", "c", "d"}}, {{"a", "c", "d"}});
  require(std::abs(rl.f1 - 6.0 / 7.0) < 1e-9, "ROUGE-L F1 != 6/7");
  return "BLEU and ROUGE hand values exact to 1e-9";
}

// --- criterion 9 -----------------------------------------------------------

ExperimentConfig mini_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.task.vocab_src = cfg.task.vocab_tgt = 12;
  cfg.task.len_min = 3;
  cfg.task.len_max = 6;
  cfg.task.mono_src = 200;
  cfg.task.mono_tgt = 200;
  cfg.task.parallel = 60;
  cfg.task.valid = 20;
  cfg.task.test = 20;
  cfg.task.sharpness = 4.0;
  cfg.bpe_merges = 64;
  cfg.d_emb = 8;
  cfg.hidden = 12;
  cfg.proj = 8;
  cfg.upper_hidden = 10;
  cfg.dropout = 0.1;
  cfg.lm_train.max_steps = 40;
  cfg.lm_train.batch_size = 8;
  cfg.lm_train.eval_every = 20;
  cfg.lm_train.lr = {5e-3, 1.0, 0, 1 << 30};
  cfg.finetune.max_steps = 30;
  cfg.finetune.batch_size = 8;
  cfg.finetune.eval_every = 10;
  cfg.finetune.eval_beam = 2;
  cfg.finetune.eval_bleu_limit = 5;
  cfg.finetune.lr = {5e-3, 1.0, 0, 1 << 30};
  cfg.seeds = {1};
  cfg.out_dir = out_dir;
  return cfg;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "missing file " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string determinism_and_persistence() {
  const auto base = fs::temp_directory_path() / "s2sp_acceptance_det";
  fs::remove_all(base);

  auto run = [&](const std::string& name) {
    Lab lab(mini_config((base / name).string()), true);
    lab.run_data_fraction({0.5, 1.0});
    return base / name;
  };
  const auto a = run("a");
  const auto b = run("b");

  for (const char* rel :
       {"config.json", "data/manifest.json", "data_fraction.csv", "data_fraction.json",
        "cells/full_seed1/checkpoint.s2sp", "cells/full_seed1/result.json",
        "cells/none_frac50_seed1/checkpoint.s2sp", "donors/src_large_monolingual_seed1.s2sp"}) {
    require(file_bytes(a / rel) == file_bytes(b / rel),
            std::string("re-run differs in ") + rel);
  }

  // checkpoint round trip is bit-exact
  const auto ckpt_path = a / "cells" / "full_seed1" / "checkpoint.s2sp";
  auto ckpt = load_checkpoint(ckpt_path.string());
  const auto copy_path = a / "roundtrip.s2sp";
  save_checkpoint(copy_path.string(), ckpt);
  require(file_bytes(ckpt_path) == file_bytes(copy_path), "save(load(x)) changed bytes");

  // corruption is rejected without partial state
  const auto bad = (a / "bad.s2sp").string();
  auto bytes = file_bytes(ckpt_path);
  {
    std::ofstream out(bad, std::ios::binary);
    out << bytes.substr(0, bytes.size() / 3);
  }
  bool threw = false;
  try {
    load_checkpoint(bad);
  } catch (const IoError&) {
    threw = true;
  }
  require(threw, "truncated checkpoint was accepted");
  {
    std::ofstream out(bad, std::ios::binary);
    out << "JUNK" << bytes.substr(4);
  }
  threw = false;
  try {
    load_checkpoint(bad);
  } catch (const IoError&) {
    threw = true;
  }
  require(threw, "bad-magic checkpoint was accepted");

  fs::remove_all(base);
  return "re-runs byte-identical across checkpoints and reports; corrupt files rejected";
}

// --- criterion 10 ----------------------------------------------------------

std::string bpe_correctness() {
  // merge-order and tie-break examples
  auto first = learn_bpe({{"aaab", 1}}, 1);
  require(first.merges == std::vector<MergePair>{{"a", "a"}}, "aaab did not learn (a,a) first");
  auto tie = learn_bpe({{"ab", 2}, {"cd", 2}}, 1);
  require(tie.merges == std::vector<MergePair>{{"a", "b</w>"}}, "tie not broken lexicographically");
  MergeTable aa{{{"a", "a"}}};
  require(apply_bpe(aa, "aaab") == std::vector<std::string>{"aa", "a", "b</w>"},
          "exhaustive application mismatch");

  // round trip over every sentence of the default synthetic task
  ExperimentConfig cfg;  // desk-scale defaults
  auto data = prepare_data(cfg);
  int64_t sentences = 0;
  auto check_side = [&](const Vocab& vocab, const MergeTable& merges,
                        const std::vector<std::string>& lines) {
    for (const auto& line : lines) {
      require(decode(vocab, encode(vocab, merges, line)) == line, "round trip failed: " + line);
      ++sentences;
    }
  };
  check_side(data.src_vocab, data.src_merges, data.text.mono_src);
  check_side(data.src_vocab, data.src_merges, data.text.parallel_src);
  check_side(data.src_vocab, data.src_merges, data.text.valid_src);
  check_side(data.src_vocab, data.src_merges, data.text.test_src);
  check_side(data.tgt_vocab, data.tgt_merges, data.text.mono_tgt);
  check_side(data.tgt_vocab, data.tgt_merges, data.text.parallel_tgt);
  check_side(data.tgt_vocab, data.tgt_merges, data.text.valid_tgt);
  check_side(data.tgt_vocab, data.tgt_merges, data.text.test_tgt);
  return std::to_string(sentences) + " sentences round-tripped; merge examples exact";
}

}  // namespace

int main() {
  acceptance::Runner runner;
  runner.criterion(1, "gradient correctness", gradient_correctness);
  runner.criterion(2, "transfer exactness", transfer_exactness);
  runner.criterion(3, "attention contract", attention_contract);
  runner.criterion(4, "beam-search optimality", beam_search_optimality);
  runner.criterion(5, "metric oracles", metric_oracles);
  runner.criterion(9, "determinism and persistence", determinism_and_persistence);
  runner.criterion(10, "bpe correctness", bpe_correctness);
  return runner.finish();
}
