#include "s2sp/decode.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace s2sp {

namespace {

// f64 log-softmax of one logit row.
std::vector<double> log_probs_row(const float* logits, int64_t v) {
  double mx = logits[0];
  for (int64_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(logits[j]));
  double denom = 0;
  for (int64_t j = 0; j < v; ++j) denom += std::exp(static_cast<double>(logits[j]) - mx);
  const double log_denom = std::log(denom);
  std::vector<double> out(v);
  for (int64_t j = 0; j < v; ++j) out[j] = static_cast<double>(logits[j]) - mx - log_denom;
  return out;
}

double final_score(const Hypothesis& h, bool length_norm) {
  if (!length_norm) return h.score;
  return h.score / static_cast<double>(std::max<int64_t>(1, h.emitted()));
}

// Winner ordering: score, then shorter, then lexicographically smaller.
bool better_final(const Hypothesis& a, const Hypothesis& b, bool length_norm) {
  const double sa = final_score(a, length_norm), sb = final_score(b, length_norm);
  if (sa != sb) return sa > sb;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

struct Candidate {
  int parent;
  int32_t token;
  double score;
};

TensorF gather_state_rows(const TensorF& t, const std::vector<int32_t>& rows) {
  return take_rows<float>(nullptr, t, rows);
}

}  // namespace

int default_max_len(const std::vector<int32_t>& src_ids) {
  return static_cast<int>(2 * src_ids.size() + 10);
}

int eval_thread_cap() {
  if (const char* env = std::getenv("S2SP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) return cap;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

BeamResult beam_search(const Seq2Seq& model, const std::vector<int32_t>& src_ids, int beam,
                       int max_len, bool length_norm) {
  if (beam < 1) throw ContractError("beam_search: beam must be >= 1");
  if (max_len < 1) throw ContractError("beam_search: max_len must be >= 1");

  Rng no_rng(0);
  const DropoutSpec no_drop(0.0);
  auto src = pad_batch({src_ids});
  auto enc = encode<float>(nullptr, model, src, no_drop, false, &no_rng);
  const int64_t v = model.tgt_vocab_size();

  std::vector<Hypothesis> live = {{{kBosId}, 0.0, false, false}};
  auto state = initial_decoder_state(model, 1);
  std::vector<Hypothesis> completed;

  for (int t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<int32_t> prev(live.size());
    for (size_t i = 0; i < live.size(); ++i) prev[i] = live[i].tokens.back();
    auto logits = decode_step<float>(nullptr, model, prev, state, enc, no_drop, false, &no_rng);

    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * static_cast<size_t>(v));
    for (size_t i = 0; i < live.size(); ++i) {
      auto lp = log_probs_row(logits->data.data() + i * v, v);
      for (int64_t j = 0; j < v; ++j)
        candidates.push_back({static_cast<int>(i), static_cast<int32_t>(j), live[i].score + lp[j]});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });

    // keep the top `capacity` extensions; an EOS extension moves to the
    // completed pool and its live slot closes for the following steps
    const size_t capacity = static_cast<size_t>(beam) - completed.size();
    std::vector<Hypothesis> next_live;
    std::vector<int32_t> keep_rows;
    size_t selected = 0;
    for (const auto& cand : candidates) {
      if (selected == capacity) break;
      ++selected;
      Hypothesis h = live[cand.parent];
      h.tokens.push_back(cand.token);
      h.score = cand.score;
      if (cand.token == kEosId) {
        h.finished = true;
        completed.push_back(h);
      } else {
        next_live.push_back(h);
        keep_rows.push_back(cand.parent);
      }
    }
    live = std::move(next_live);
    if (!live.empty()) {
      DecoderState next_state;
      for (const auto& layer_state : state.layers)
        next_state.layers.push_back({gather_state_rows(layer_state.h, keep_rows),
                                     gather_state_rows(layer_state.c, keep_rows)});
      state = std::move(next_state);
    }
  }

  BeamResult result;
  for (auto& h : live) {
    h.truncated = true;
    result.beam.push_back(h);
  }
  for (const auto& h : completed) result.beam.push_back(h);
  std::sort(result.beam.begin(), result.beam.end(),
            [&](const Hypothesis& a, const Hypothesis& b) { return better_final(a, b, length_norm); });
  result.best = result.beam.front();
  return result;
}

Hypothesis greedy_decode(const Seq2Seq& model, const std::vector<int32_t>& src_ids, int max_len) {
  if (max_len < 1) throw ContractError("greedy_decode: max_len must be >= 1");
  Rng no_rng(0);
  const DropoutSpec no_drop(0.0);
  auto src = pad_batch({src_ids});
  auto enc = encode<float>(nullptr, model, src, no_drop, false, &no_rng);
  const int64_t v = model.tgt_vocab_size();

  Hypothesis hyp{{kBosId}, 0.0, false, false};
  auto state = initial_decoder_state(model, 1);
  for (int t = 0; t < max_len; ++t) {
    auto logits = decode_step<float>(nullptr, model, {hyp.tokens.back()}, state, enc, no_drop, false,
                                     &no_rng);
    auto lp = log_probs_row(logits->data.data(), v);
    int32_t best = 0;
    for (int64_t j = 1; j < v; ++j)
      if (lp[j] > lp[best]) best = static_cast<int32_t>(j);
    hyp.tokens.push_back(best);
    hyp.score += lp[best];
    if (best == kEosId) {
      hyp.finished = true;
      return hyp;
    }
  }
  hyp.truncated = true;
  return hyp;
}

std::vector<Hypothesis> decode_corpus(const Seq2Seq& model, const Corpus& src, int beam,
                                      bool length_norm, int threads) {
  std::vector<Hypothesis> out(src.size());
  if (threads <= 0) threads = eval_thread_cap();
  threads = std::min<int>(threads, static_cast<int>(src.size()));
  if (threads <= 1) {
    for (size_t i = 0; i < src.size(); ++i)
      out[i] = beam_search(model, src[i], beam, default_max_len(src[i]), length_norm).best;
    return out;
  }
  std::vector<std::thread> workers;
  std::atomic<size_t> cursor{0};
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (size_t i = cursor.fetch_add(1); i < src.size(); i = cursor.fetch_add(1))
        out[i] = beam_search(model, src[i], beam, default_max_len(src[i]), length_norm).best;
    });
  }
  for (auto& t : workers) t.join();
  return out;
}

}  // namespace s2sp
