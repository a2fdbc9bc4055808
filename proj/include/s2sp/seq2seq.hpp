#pragma once

// Encoder-decoder with attention over both the first and last encoder layers
// and a residual connection from the first decoder LSTM layer straight into
// the softmax input:
//
//   alpha_i = exp(q_t . h_i^N) / sum_j exp(q_t . h_j^N)     (masked)
//   c_t     = [ sum_i alpha_i h_i^1 ; sum_i alpha_i h_i^N ]
//   s_t     = h_t^1 + tanh(W_a [c_t ; h_t^top])
//
// The query q_t is the decoder's top-layer output. With W_a = 0 the decoder
// collapses onto the language-model path through {embedding, first layer,
// softmax}, which pretrained donor weights slot into.

#include <string>
#include <vector>

#include "s2sp/lm.hpp"

namespace s2sp {

struct Seq2SeqConfig {
  int32_t src_vocab = 0;
  int32_t tgt_vocab = 0;
  int64_t d_emb = 64;
  int64_t hidden = 256;        // first-layer LSTM size (must match donor LMs)
  int64_t proj = 64;           // shared output width p of every layer
  int64_t upper_hidden = 128;  // LSTM size of layers above the first
  int enc_layers = 2;
  int dec_layers = 2;
  double dropout = 0.2;
  // W_a starts at a tenth of the usual init range so a freshly transferred
  // model sits near the donor LM behavior.
  double attn_init_scale = 0.1;
};

template <typename S>
struct Seq2SeqT {
  EmbeddingT<S> enc_embedding;
  std::vector<LstmT<S>> enc_layers;
  EmbeddingT<S> dec_embedding;
  std::vector<LstmT<S>> dec_layers;
  TensorPtr<S> attn_w;  // [3p, p]
  SoftmaxT<S> dec_softmax;

  int64_t layer_width() const { return enc_layers.front().output_dim(); }
  int32_t src_vocab_size() const { return static_cast<int32_t>(enc_embedding.vocab_size()); }
  int32_t tgt_vocab_size() const { return static_cast<int32_t>(dec_embedding.vocab_size()); }

  void validate() const {
    if (enc_layers.empty() || dec_layers.empty())
      throw ShapeError("seq2seq: need at least one encoder and one decoder layer");
    const int64_t p = enc_layers.front().output_dim();
    for (const auto& l : enc_layers)
      if (l.output_dim() != p) throw ShapeError("seq2seq: encoder layer widths must all equal p");
    for (const auto& l : dec_layers)
      if (l.output_dim() != p)
        throw ShapeError("seq2seq: attention requires decoder width == encoder width");
    if (dec_softmax.input_dim() != p)
      throw ShapeError("seq2seq: softmax input dim must equal p for the residual connection");
    if (!attn_w || attn_w->shape != Shape{3 * p, p})
      throw ShapeError("seq2seq: attention projection must be [3p, p]");
  }
};

using Seq2Seq = Seq2SeqT<float>;

template <typename S>
Seq2SeqT<S> make_seq2seq(const Seq2SeqConfig& cfg, Rng& rng) {
  Seq2SeqT<S> model;
  model.enc_embedding = make_embedding<S>(cfg.src_vocab, cfg.d_emb, rng);
  for (int i = 0; i < cfg.enc_layers; ++i)
    model.enc_layers.push_back(make_lstm<S>(i == 0 ? cfg.d_emb : cfg.proj,
                                            i == 0 ? cfg.hidden : cfg.upper_hidden, cfg.proj, rng));
  model.dec_embedding = make_embedding<S>(cfg.tgt_vocab, cfg.d_emb, rng);
  for (int i = 0; i < cfg.dec_layers; ++i)
    model.dec_layers.push_back(make_lstm<S>(i == 0 ? cfg.d_emb : cfg.proj,
                                            i == 0 ? cfg.hidden : cfg.upper_hidden, cfg.proj, rng));
  const double r = kInitRange * cfg.attn_init_scale;
  model.attn_w = uniform_tensor<S>({3 * cfg.proj, cfg.proj}, rng, -r, r);
  model.dec_softmax = make_softmax<S>(cfg.proj, cfg.tgt_vocab, rng);
  model.validate();
  return model;
}

template <typename S>
void register_seq2seq_params(ParamStoreT<S>& store, const Seq2SeqT<S>& model) {
  store.add("enc.embedding.table", model.enc_embedding.table);
  for (size_t i = 0; i < model.enc_layers.size(); ++i)
    register_lstm_params(store, model.enc_layers[i], "enc.layer" + std::to_string(i + 1));
  store.add("dec.embedding.table", model.dec_embedding.table);
  for (size_t i = 0; i < model.dec_layers.size(); ++i)
    register_lstm_params(store, model.dec_layers[i], "dec.layer" + std::to_string(i + 1));
  store.add("attn.w_a", model.attn_w);
  store.add("dec.softmax.w", model.dec_softmax.w);
  store.add("dec.softmax.b", model.dec_softmax.b);
}

// First- and last-layer encoder state sequences, [B*T, p] rows b*T + t.
template <typename S>
struct EncoderStatesT {
  TensorPtr<S> h_first;
  TensorPtr<S> h_last;
  int64_t batch = 0;
  int64_t time = 0;
  std::vector<uint8_t> mask;  // live (non-PAD) source positions
};

using EncoderStates = EncoderStatesT<float>;

template <typename S>
EncoderStatesT<S> encode(TapeT<S>* tape, const Seq2SeqT<S>& model, const Batch& src,
                         const DropoutSpec& drop, bool train, Rng* rng) {
  EncoderStatesT<S> enc;
  enc.batch = src.batch;
  enc.time = src.time;
  enc.mask = src.live_mask();
  auto embedded = embed(tape, model.enc_embedding, src);
  auto outputs = unroll<S>(tape, model.enc_layers, embedded, src.batch, src.time, enc.mask, drop,
                           train, rng);
  enc.h_first = outputs.front();
  enc.h_last = outputs.back();
  return enc;
}

template <typename S>
struct AttentionT {
  TensorPtr<S> context;  // [rows, 2p]: [first-layer context ; last-layer context]
  TensorPtr<S> alpha;    // [rows, T_src]
};

// Query rows may hold several decoder steps per batch item (rows = B * Q).
// Masked source positions get exactly zero weight.
template <typename S>
AttentionT<S> attend(TapeT<S>* tape, const TensorPtr<S>& q, const EncoderStatesT<S>& enc) {
  const int64_t queries = q->shape[0] / enc.batch;
  std::vector<uint8_t> mask(static_cast<size_t>(q->shape[0]) * enc.time);
  for (int64_t b = 0; b < enc.batch; ++b)
    for (int64_t i = 0; i < queries; ++i)
      for (int64_t t = 0; t < enc.time; ++t)
        mask[(b * queries + i) * enc.time + t] = enc.mask[b * enc.time + t];

  AttentionT<S> out;
  auto scores = attn_scores(tape, q, enc.h_last, enc.batch, enc.time);
  out.alpha = masked_softmax_rows(tape, scores, mask);
  auto c_first = attn_context(tape, out.alpha, enc.h_first, enc.batch);
  auto c_last = attn_context(tape, out.alpha, enc.h_last, enc.batch);
  out.context = concat_cols(tape, c_first, c_last);
  return out;
}

// Softmax input: residual first-layer output plus the squashed projection of
// [context ; top-layer output].
template <typename S>
TensorPtr<S> softmax_input(TapeT<S>* tape, const Seq2SeqT<S>& model, const TensorPtr<S>& h_first,
                           const TensorPtr<S>& context, const TensorPtr<S>& h_top) {
  auto mixed = tanh_op(tape, matmul(tape, concat_cols(tape, context, h_top), model.attn_w));
  return add(tape, h_first, mixed);
}

template <typename S>
struct DecoderStateT {
  std::vector<LstmStateT<S>> layers;
};

using DecoderState = DecoderStateT<float>;

template <typename S>
DecoderStateT<S> initial_decoder_state(const Seq2SeqT<S>& model, int64_t batch) {
  DecoderStateT<S> state;
  for (const auto& layer : model.dec_layers) state.layers.push_back(zero_state(layer, batch));
  return state;
}

// One decoder step for a batch of previous tokens.
template <typename S>
TensorPtr<S> decode_step(TapeT<S>* tape, const Seq2SeqT<S>& model, const std::vector<int32_t>& y_prev,
                         DecoderStateT<S>& state, const EncoderStatesT<S>& enc, const DropoutSpec& drop,
                         bool train, Rng* rng) {
  auto x = embed(tape, model.dec_embedding, y_prev);
  TensorPtr<S> layer_in = x;
  for (size_t i = 0; i < model.dec_layers.size(); ++i) {
    state.layers[i] = lstm_step(tape, model.dec_layers[i], layer_in, state.layers[i], drop, train, rng);
    layer_in = state.layers[i].h;
  }
  auto att = attend(tape, layer_in, enc);
  auto s = softmax_input(tape, model, state.layers.front().h, att.context, layer_in);
  return project_logits(tape, model.dec_softmax, s);
}

// Teacher-forced forward pass over a target batch ([BOS ... EOS PAD*] rows).
template <typename S>
struct Seq2SeqForwardT {
  TensorPtr<S> logits;  // [B*(T_tgt-1), V_tgt]
  TensorPtr<S> alpha;   // [B*(T_tgt-1), T_src]
  std::vector<int32_t> targets;
  std::vector<uint8_t> target_mask;
  int64_t tokens = 0;
};

template <typename S>
Seq2SeqForwardT<S> seq2seq_forward(TapeT<S>* tape, const Seq2SeqT<S>& model, const Batch& src,
                                   const Batch& tgt, const DropoutSpec& drop, bool train, Rng* rng) {
  if (tgt.time < 2) throw ContractError("seq2seq target batch needs T >= 2 (BOS plus EOS)");
  if (src.batch != tgt.batch) throw ContractError("seq2seq: source/target batch sizes differ");
  auto enc = encode(tape, model, src, drop, train, rng);

  const int64_t b_n = tgt.batch, t_in = tgt.time - 1;
  Seq2SeqForwardT<S> out;
  std::vector<int32_t> inputs(b_n * t_in);
  std::vector<uint8_t> input_live(b_n * t_in);
  out.targets.resize(b_n * t_in);
  out.target_mask.resize(b_n * t_in);
  for (int64_t b = 0; b < b_n; ++b) {
    for (int64_t t = 0; t < t_in; ++t) {
      inputs[b * t_in + t] = tgt.at(b, t);
      input_live[b * t_in + t] = tgt.at(b, t) != kPadId;
      const int32_t tgt_id = tgt.at(b, t + 1);
      out.targets[b * t_in + t] = tgt_id;
      out.target_mask[b * t_in + t] = tgt_id != kPadId;
      out.tokens += tgt_id != kPadId;
    }
  }

  auto embedded = embed(tape, model.dec_embedding, inputs);
  auto dec_out = unroll<S>(tape, model.dec_layers, embedded, b_n, t_in, input_live, drop, train, rng);
  auto att = attend(tape, dec_out.back(), enc);
  auto s = softmax_input(tape, model, dec_out.front(), att.context, dec_out.back());
  out.logits = project_logits(tape, model.dec_softmax, s);
  out.alpha = att.alpha;
  return out;
}

// Mean per-token cross entropy over non-PAD target predictions.
template <typename S>
LossT<S> seq2seq_loss(TapeT<S>* tape, const Seq2SeqT<S>& model, const Batch& src, const Batch& tgt,
                      const DropoutSpec& drop, bool train, Rng* rng) {
  auto fwd = seq2seq_forward(tape, model, src, tgt, drop, train, rng);
  return {cross_entropy(tape, fwd.logits, fwd.targets, fwd.target_mask), fwd.tokens};
}

// Teacher-forcing validation perplexity (f64 NLL accumulation, eval mode).
template <typename S>
double seq2seq_perplexity(const Seq2SeqT<S>& model, const Corpus& src_corpus, const Corpus& tgt_corpus,
                          int64_t batch_size) {
  if (src_corpus.empty() || src_corpus.size() != tgt_corpus.size())
    throw ContractError("seq2seq_perplexity: corpora empty or misaligned");
  double total_nll = 0;
  int64_t total_tokens = 0;
  Rng no_rng(0);
  for (size_t start = 0; start < src_corpus.size(); start += batch_size) {
    const size_t end = std::min(src_corpus.size(), start + static_cast<size_t>(batch_size));
    auto src = pad_batch({src_corpus.begin() + start, src_corpus.begin() + end});
    auto tgt = pad_batch({tgt_corpus.begin() + start, tgt_corpus.begin() + end});
    auto fwd = seq2seq_forward<S>(nullptr, model, src, tgt, DropoutSpec(0.0), false, &no_rng);
    total_nll += masked_nll_f64(fwd.logits, fwd.targets, fwd.target_mask);
    total_tokens += fwd.tokens;
  }
  if (total_tokens == 0) throw ContractError("seq2seq_perplexity: no predicted tokens");
  return std::exp(total_nll / static_cast<double>(total_tokens));
}

}  // namespace s2sp
