#pragma once

// Next-step-prediction language models: the pretraining donors. A donor is
// exactly {embedding, one projection-LSTM layer, softmax} so that every donor
// parameter has a recipient slot in the seq2seq model.
//
// lm_logits_parts() is the single implementation of the LM forward path; the
// fine-tuning joint objective reuses it on the seq2seq's own sub-networks,
// which is what makes the donor-equivalence checks bit-exact.

#include <cmath>
#include <string>
#include <vector>

#include "s2sp/data.hpp"
#include "s2sp/layers.hpp"
#include "s2sp/optim.hpp"
#include "s2sp/params.hpp"

namespace s2sp {

using Corpus = std::vector<std::vector<int32_t>>;

template <typename S>
struct LanguageModelT {
  EmbeddingT<S> embedding;
  LstmT<S> lstm1;
  SoftmaxT<S> softmax;

  int32_t vocab_size() const { return static_cast<int32_t>(embedding.vocab_size()); }

  void validate() const {
    if (embedding.vocab_size() != softmax.vocab_size())
      throw ShapeError("language model: embedding vocab " + std::to_string(embedding.vocab_size()) +
                       " != softmax vocab " + std::to_string(softmax.vocab_size()));
    if (lstm1.output_dim() != softmax.input_dim())
      throw ShapeError("language model: lstm output dim " + std::to_string(lstm1.output_dim()) +
                       " != softmax input dim " + std::to_string(softmax.input_dim()));
    if (embedding.dim() != lstm1.input_dim())
      throw ShapeError("language model: embedding dim != lstm input dim");
  }
};

using LanguageModel = LanguageModelT<float>;

struct LmTrainConfig {
  int64_t max_steps = 800;
  int64_t batch_size = 32;
  LrSchedule lr{1e-3, 0.8, 2000, 4000};
  double clip_norm = 5.0;
  int64_t eval_every = 100;
  int patience = 5;
  int64_t eval_batch_size = 64;
};

struct LmConfig {
  int32_t vocab_size = 0;
  int64_t d_emb = 64;
  int64_t hidden = 256;
  int64_t proj = 64;  // 0 builds a vanilla cell
  double dropout = 0.2;
  LmTrainConfig train;
};

template <typename S>
LanguageModelT<S> make_language_model(const LmConfig& cfg, Rng& rng) {
  LanguageModelT<S> model;
  model.embedding = make_embedding<S>(cfg.vocab_size, cfg.d_emb, rng);
  model.lstm1 = make_lstm<S>(cfg.d_emb, cfg.hidden, cfg.proj, rng);
  const int64_t out_dim = cfg.proj > 0 ? cfg.proj : cfg.hidden;
  model.softmax = make_softmax<S>(out_dim, cfg.vocab_size, rng);
  model.validate();
  return model;
}

template <typename S>
void register_lstm_params(ParamStoreT<S>& store, const LstmT<S>& layer, const std::string& prefix) {
  store.add(prefix + ".w_x", layer.w_x);
  store.add(prefix + ".w_h", layer.w_h);
  store.add(prefix + ".b", layer.b);
  if (layer.w_proj) store.add(prefix + ".w_proj", layer.w_proj);
}

template <typename S>
void register_lm_params(ParamStoreT<S>& store, const LanguageModelT<S>& model,
                        const std::string& prefix = "") {
  store.add(prefix + "embedding.table", model.embedding.table);
  register_lstm_params(store, model.lstm1, prefix + "lstm1");
  store.add(prefix + "softmax.w", model.softmax.w);
  store.add(prefix + "softmax.b", model.softmax.b);
}

// Output of the LM forward path: logits for predicting token t+1 at position
// t, with shifted targets and their padding mask. Rows are b*(T-1) + t.
template <typename S>
struct LmLogitsT {
  TensorPtr<S> logits;
  std::vector<int32_t> targets;
  std::vector<uint8_t> target_mask;
  int64_t tokens = 0;  // unmasked prediction count
};

// Runs {embedding, lstm, softmax} as a language model over the batch.
// Position t consumes token t and predicts token t+1.
template <typename S>
LmLogitsT<S> lm_logits_parts(TapeT<S>* tape, const EmbeddingT<S>& embedding, const LstmT<S>& lstm,
                             const SoftmaxT<S>& softmax, const Batch& batch, const DropoutSpec& drop,
                             bool train, Rng* rng) {
  if (batch.time < 2) throw ContractError("language model batch needs T >= 2");
  if (embedding.vocab_size() != softmax.vocab_size())
    throw ShapeError("lm vocab mismatch: embedding " + std::to_string(embedding.vocab_size()) +
                     " vs softmax " + std::to_string(softmax.vocab_size()));
  const int64_t b_n = batch.batch, t_in = batch.time - 1;

  LmLogitsT<S> out;
  std::vector<int32_t> inputs(b_n * t_in);
  std::vector<uint8_t> input_live(b_n * t_in);
  out.targets.resize(b_n * t_in);
  out.target_mask.resize(b_n * t_in);
  for (int64_t b = 0; b < b_n; ++b) {
    for (int64_t t = 0; t < t_in; ++t) {
      const int32_t in_id = batch.at(b, t);
      const int32_t tgt_id = batch.at(b, t + 1);
      inputs[b * t_in + t] = in_id;
      input_live[b * t_in + t] = in_id != kPadId;
      out.targets[b * t_in + t] = tgt_id;
      out.target_mask[b * t_in + t] = tgt_id != kPadId;
      out.tokens += tgt_id != kPadId;
    }
  }

  auto embedded = embed(tape, embedding, inputs);
  const LstmT<S> stack[1] = {lstm};
  auto states = unroll<S>(tape, stack, embedded, b_n, t_in, input_live, drop, train, rng);
  out.logits = project_logits(tape, softmax, states.back());
  return out;
}

template <typename S>
LmLogitsT<S> lm_forward(TapeT<S>* tape, const LanguageModelT<S>& model, const Batch& batch,
                        const DropoutSpec& drop, bool train, Rng* rng) {
  return lm_logits_parts(tape, model.embedding, model.lstm1, model.softmax, batch, drop, train, rng);
}

template <typename S>
struct LossT {
  TensorPtr<S> loss;
  int64_t tokens = 0;
};

// Mean per-token cross entropy over non-PAD prediction positions.
template <typename S>
LossT<S> lm_loss(TapeT<S>* tape, const LanguageModelT<S>& model, const Batch& batch,
                 const DropoutSpec& drop, bool train, Rng* rng) {
  auto fwd = lm_forward(tape, model, batch, drop, train, rng);
  return {cross_entropy(tape, fwd.logits, fwd.targets, fwd.target_mask), fwd.tokens};
}

// exp(total NLL / total predicted tokens), token-weighted across batches.
// NLL totals accumulate in f64.
template <typename S>
double perplexity(const LanguageModelT<S>& model, const Corpus& corpus, int64_t batch_size) {
  if (corpus.empty()) throw ContractError("perplexity: empty corpus");
  double total_nll = 0;
  int64_t total_tokens = 0;
  Rng no_rng(0);
  for (size_t start = 0; start < corpus.size(); start += batch_size) {
    const size_t end = std::min(corpus.size(), start + static_cast<size_t>(batch_size));
    auto batch = pad_batch({corpus.begin() + start, corpus.begin() + end});
    auto fwd = lm_forward<S>(nullptr, model, batch, DropoutSpec(0.0), false, &no_rng);
    total_nll += masked_nll_f64(fwd.logits, fwd.targets, fwd.target_mask);
    total_tokens += fwd.tokens;
  }
  if (total_tokens == 0) throw ContractError("perplexity: no predicted tokens");
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

struct TrainLogRow {
  int64_t step = 0;
  double train_loss = 0;
  double valid_ppl = 0;
  double lr = 0;
};

struct LmTrainResult {
  LanguageModelT<float> model;
  std::vector<TrainLogRow> log;
  double best_valid_ppl = 0;
  int64_t best_step = 0;
  int64_t steps_run = 0;
};

// Adam training over shuffled minibatches with periodic validation and early
// stopping; returns the model at the best validation perplexity.
inline LmTrainResult train_lm(const LmConfig& cfg, const Corpus& train_corpus, const Corpus& valid_corpus,
                              Rng& rng) {
  if (train_corpus.empty() || valid_corpus.empty())
    throw ContractError("train_lm: train and valid corpora must be nonempty");

  LmTrainResult result;
  result.model = make_language_model<float>(cfg, rng);
  ParamStore params;
  register_lm_params(params, result.model);
  Adam adam(params);
  EarlyStopper stopper(cfg.train.patience);
  DropoutSpec drop(cfg.dropout);
  ParamStore best = params.snapshot();

  std::vector<std::vector<size_t>> batches;
  size_t batch_cursor = 0;
  auto next_batch = [&]() -> Batch {
    if (batch_cursor >= batches.size()) {
      batches = epoch_batches(train_corpus.size(), cfg.train.batch_size, rng);
      batch_cursor = 0;
    }
    std::vector<std::vector<int32_t>> rows;
    rows.reserve(batches[batch_cursor].size());
    for (size_t idx : batches[batch_cursor]) rows.push_back(train_corpus[idx]);
    ++batch_cursor;
    return pad_batch(rows);
  };

  double best_ppl = std::numeric_limits<double>::infinity();
  int64_t best_step = 0;
  for (int64_t step = 1; step <= cfg.train.max_steps; ++step) {
    auto batch = next_batch();
    Tape tape;
    params.zero_grads();
    auto res = lm_loss<float>(&tape, result.model, batch, drop, true, &rng);
    const double loss = res.loss->scalar();
    if (!std::isfinite(loss))
      throw TrainingError("train_lm: loss diverged at step " + std::to_string(step));
    tape.backward(res.loss);
    clip_global_norm(params, cfg.train.clip_norm);
    const double lr = lr_at(cfg.train.lr, step - 1);
    adam.step(params, lr);
    result.steps_run = step;

    if (step % cfg.train.eval_every == 0 || step == cfg.train.max_steps) {
      const double ppl = perplexity(result.model, valid_corpus, cfg.train.eval_batch_size);
      result.log.push_back({step, loss, ppl, lr});
      auto decision = stopper.update(ppl);
      if (decision.improved) {
        best = params.snapshot();
        best_ppl = ppl;
        best_step = step;
      }
      if (decision.stop) break;
    }
  }
  params.restore(best);
  result.best_valid_ppl = best_ppl;
  result.best_step = best_step;
  return result;
}

}  // namespace s2sp
