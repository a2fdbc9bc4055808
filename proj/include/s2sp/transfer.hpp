#pragma once

// Weight transplantation from donor language models into a seq2seq model and
// the joint fine-tuning objective (seq2seq + source LM + target LM losses,
// equally weighted by default).
//
// The monolingual losses run through exactly the pretrained sub-networks of
// the seq2seq model -- {embedding, first layer, softmax} per side -- via the
// same lm_logits_parts() code path as a standalone language model, so a
// freshly transferred model reproduces its donor's LM loss bit for bit.
// The encoder has no softmax of its own; the source LM loss keeps the donor
// source softmax alive as auxiliary parameters.

#include <string>
#include <vector>

#include "s2sp/seq2seq.hpp"

namespace s2sp {

enum class DonorCorpus { large_monolingual, parallel_only };

struct AblationMode {
  bool pretrain_encoder = false;
  bool pretrain_decoder = false;
  bool pretrain_softmax = false;
  bool pretrain_embeddings_only = false;
  bool lm_objective = true;
  DonorCorpus donor_corpus = DonorCorpus::large_monolingual;

  void validate() const {
    if (pretrain_softmax && !pretrain_decoder)
      throw ContractError("ablation mode: pretrain_softmax requires pretrain_decoder");
    if (pretrain_embeddings_only && !(pretrain_encoder || pretrain_decoder))
      throw ContractError("ablation mode: embeddings-only transfer needs a pretrained side");
  }

  bool any_transfer() const { return pretrain_encoder || pretrain_decoder; }

  // The ablation grid rows: full, decoder_only, encoder_only, no_softmax,
  // embeddings_only, none.
  static AblationMode named(const std::string& name);
  std::string describe() const;
};

struct TransferEntry {
  std::string param;
  std::string source;  // "transferred" or "random"
};

struct TransferReport {
  std::vector<TransferEntry> entries;

  int transferred_count() const {
    int n = 0;
    for (const auto& e : entries) n += e.source == "transferred";
    return n;
  }
  std::vector<std::string> transferred_names() const {
    std::vector<std::string> names;
    for (const auto& e : entries)
      if (e.source == "transferred") names.push_back(e.param);
    return names;
  }
};

// Seq2seq model plus the auxiliary source-side softmax used only by the
// source LM loss during fine-tuning.
template <typename S>
struct FinetuneModelT {
  Seq2SeqT<S> seq2seq;
  SoftmaxT<S> aux_src_softmax;
};

using FinetuneModel = FinetuneModelT<float>;

template <typename S>
FinetuneModelT<S> make_finetune_model(const Seq2SeqConfig& cfg, Rng& rng) {
  FinetuneModelT<S> m;
  m.seq2seq = make_seq2seq<S>(cfg, rng);
  m.aux_src_softmax = make_softmax<S>(cfg.proj, cfg.src_vocab, rng);
  return m;
}

template <typename S>
void register_finetune_params(ParamStoreT<S>& store, const FinetuneModelT<S>& model) {
  register_seq2seq_params(store, model.seq2seq);
  store.add("src_softmax.w", model.aux_src_softmax.w);
  store.add("src_softmax.b", model.aux_src_softmax.b);
}

namespace detail {

template <typename S>
void copy_tensor(const std::string& name, const TensorPtr<S>& dst, const TensorPtr<S>& src) {
  if (dst->shape != src->shape)
    throw TransferError("transfer dim mismatch for " + name + ": recipient " + shape_str(dst->shape) +
                        " vs donor " + shape_str(src->shape));
  dst->data = src->data;
}

}  // namespace detail

// Copies donor weights (by value) into the recipient per the ablation mode.
// Donor and recipient vocabularies must be identical per side; sizes are
// checked here, content identity is the caller's contract.
template <typename S>
TransferReport init_from_lms(FinetuneModelT<S>& model, const LanguageModelT<S>& src_lm,
                             const LanguageModelT<S>& tgt_lm, const AblationMode& mode) {
  mode.validate();
  src_lm.validate();
  tgt_lm.validate();
  auto& s2s = model.seq2seq;
  if (s2s.src_vocab_size() != src_lm.vocab_size())
    throw TransferError("source vocab mismatch: seq2seq " + std::to_string(s2s.src_vocab_size()) +
                        " vs donor " + std::to_string(src_lm.vocab_size()));
  if (s2s.tgt_vocab_size() != tgt_lm.vocab_size())
    throw TransferError("target vocab mismatch: seq2seq " + std::to_string(s2s.tgt_vocab_size()) +
                        " vs donor " + std::to_string(tgt_lm.vocab_size()));

  const bool enc_emb = mode.pretrain_encoder;
  const bool dec_emb = mode.pretrain_decoder;
  const bool enc_layer = mode.pretrain_encoder && !mode.pretrain_embeddings_only;
  const bool dec_layer = mode.pretrain_decoder && !mode.pretrain_embeddings_only;
  const bool dec_softmax = mode.pretrain_softmax && !mode.pretrain_embeddings_only;
  // The auxiliary source softmax rides along with the encoder-side donor.
  const bool src_softmax = enc_layer;

  TransferReport report;
  auto note = [&](const std::string& name, bool moved) {
    report.entries.push_back({name, moved ? "transferred" : "random"});
  };
  auto copy_if = [&](bool flag, const std::string& name, const TensorPtr<S>& dst, const TensorPtr<S>& src) {
    if (flag) detail::copy_tensor(name, dst, src);
    note(name, flag);
  };
  auto copy_lstm = [&](bool flag, const std::string& prefix, const LstmT<S>& dst, const LstmT<S>& src) {
    if (flag && static_cast<bool>(dst.w_proj) != static_cast<bool>(src.w_proj))
      throw TransferError("transfer mismatch for " + prefix + ": projection presence differs");
    copy_if(flag, prefix + ".w_x", dst.w_x, src.w_x);
    copy_if(flag, prefix + ".w_h", dst.w_h, src.w_h);
    copy_if(flag, prefix + ".b", dst.b, src.b);
    if (dst.w_proj) copy_if(flag, prefix + ".w_proj", dst.w_proj, src.w_proj);
  };

  copy_if(enc_emb, "enc.embedding.table", s2s.enc_embedding.table, src_lm.embedding.table);
  copy_lstm(enc_layer, "enc.layer1", s2s.enc_layers.front(), src_lm.lstm1);
  copy_if(dec_emb, "dec.embedding.table", s2s.dec_embedding.table, tgt_lm.embedding.table);
  copy_lstm(dec_layer, "dec.layer1", s2s.dec_layers.front(), tgt_lm.lstm1);
  copy_if(dec_softmax, "dec.softmax.w", s2s.dec_softmax.w, tgt_lm.softmax.w);
  copy_if(dec_softmax, "dec.softmax.b", s2s.dec_softmax.b, tgt_lm.softmax.b);
  copy_if(src_softmax, "src_softmax.w", model.aux_src_softmax.w, src_lm.softmax.w);
  copy_if(src_softmax, "src_softmax.b", model.aux_src_softmax.b, src_lm.softmax.b);

  // Untouched parameters keep their random init; report them too.
  for (size_t i = 1; i < s2s.enc_layers.size(); ++i) note("enc.layer" + std::to_string(i + 1), false);
  for (size_t i = 1; i < s2s.dec_layers.size(); ++i) note("dec.layer" + std::to_string(i + 1), false);
  note("attn.w_a", false);
  return report;
}

struct JointLossWeights {
  double seq2seq = 1.0;
  double src_lm = 1.0;
  double tgt_lm = 1.0;
};

template <typename S>
struct JointLossT {
  TensorPtr<S> total;
  TensorPtr<S> seq2seq_loss;  // null when its weight is zero
  TensorPtr<S> src_lm_loss;
  TensorPtr<S> tgt_lm_loss;
  int64_t seq2seq_tokens = 0;
  int64_t src_tokens = 0;
  int64_t tgt_tokens = 0;
};

// total = w1 * L_seq2seq + w2 * L_srcLM + w3 * L_tgtLM on one tape, so all
// three terms accumulate into the shared parameters in a single backward.
// The source LM runs {enc embedding, enc layer 1, aux softmax}; the target LM
// runs {dec embedding, dec layer 1, dec softmax}.
template <typename S>
JointLossT<S> joint_loss(TapeT<S>* tape, FinetuneModelT<S>& model, const Batch* s2s_src,
                         const Batch* s2s_tgt, const Batch* src_mono, const Batch* tgt_mono,
                         const JointLossWeights& weights, const DropoutSpec& drop, bool train,
                         Rng* rng) {
  JointLossT<S> out;
  auto accumulate = [&](const TensorPtr<S>& term, double w) {
    auto scaled = scale(tape, term, static_cast<S>(w));
    out.total = out.total ? add(tape, out.total, scaled) : scaled;
  };

  if (weights.seq2seq > 0) {
    if (!s2s_src || !s2s_tgt) throw ContractError("joint_loss: seq2seq weight needs a parallel batch");
    auto res = seq2seq_loss(tape, model.seq2seq, *s2s_src, *s2s_tgt, drop, train, rng);
    out.seq2seq_loss = res.loss;
    out.seq2seq_tokens = res.tokens;
    accumulate(res.loss, weights.seq2seq);
  }
  if (weights.src_lm > 0) {
    if (!src_mono) throw ContractError("joint_loss: src_lm weight needs a monolingual batch");
    auto fwd = lm_logits_parts(tape, model.seq2seq.enc_embedding, model.seq2seq.enc_layers.front(),
                               model.aux_src_softmax, *src_mono, drop, train, rng);
    out.src_lm_loss = cross_entropy(tape, fwd.logits, fwd.targets, fwd.target_mask);
    out.src_tokens = fwd.tokens;
    accumulate(out.src_lm_loss, weights.src_lm);
  }
  if (weights.tgt_lm > 0) {
    if (!tgt_mono) throw ContractError("joint_loss: tgt_lm weight needs a monolingual batch");
    auto fwd = lm_logits_parts(tape, model.seq2seq.dec_embedding, model.seq2seq.dec_layers.front(),
                               model.seq2seq.dec_softmax, *tgt_mono, drop, train, rng);
    out.tgt_lm_loss = cross_entropy(tape, fwd.logits, fwd.targets, fwd.target_mask);
    out.tgt_tokens = fwd.tokens;
    accumulate(out.tgt_lm_loss, weights.tgt_lm);
  }
  if (!out.total) throw ContractError("joint_loss: all weights are zero");
  return out;
}

// Target-side monolingual perplexity through the seq2seq's LM path; the
// catastrophic-forgetting probe.
template <typename S>
double tgt_lm_path_perplexity(const FinetuneModelT<S>& model, const Corpus& corpus, int64_t batch_size) {
  LanguageModelT<S> view{model.seq2seq.dec_embedding, model.seq2seq.dec_layers.front(),
                         model.seq2seq.dec_softmax};
  return perplexity(view, corpus, batch_size);
}

inline AblationMode AblationMode::named(const std::string& name) {
  AblationMode m;
  if (name == "full") {
    m.pretrain_encoder = m.pretrain_decoder = m.pretrain_softmax = true;
  } else if (name == "decoder_only") {
    m.pretrain_decoder = m.pretrain_softmax = true;
  } else if (name == "encoder_only") {
    m.pretrain_encoder = true;
  } else if (name == "no_softmax") {
    m.pretrain_encoder = m.pretrain_decoder = true;
  } else if (name == "embeddings_only") {
    m.pretrain_encoder = m.pretrain_decoder = true;
    m.pretrain_embeddings_only = true;
  } else if (name == "none") {
    // all transfers off
  } else {
    throw ContractError("unknown ablation mode: " + name);
  }
  m.validate();
  return m;
}

inline std::string AblationMode::describe() const {
  std::string s;
  s += pretrain_encoder ? "enc+" : "enc-";
  s += pretrain_decoder ? "dec+" : "dec-";
  s += pretrain_softmax ? "sm+" : "sm-";
  if (pretrain_embeddings_only) s += "embonly";
  s += lm_objective ? " lmobj" : " nolmobj";
  s += donor_corpus == DonorCorpus::parallel_only ? " pardonor" : "";
  return s;
}

}  // namespace s2sp
