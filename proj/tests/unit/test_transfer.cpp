#include <doctest.h>

#include <algorithm>
#include <set>

#include "s2sp/transfer.hpp"

using namespace s2sp;

namespace {

constexpr int32_t kSrcVocab = 9;
constexpr int32_t kTgtVocab = 11;

Seq2SeqConfig model_config() {
  Seq2SeqConfig cfg;
  cfg.src_vocab = kSrcVocab;
  cfg.tgt_vocab = kTgtVocab;
  cfg.d_emb = 4;
  cfg.hidden = 6;
  cfg.proj = 4;
  cfg.upper_hidden = 5;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.dropout = 0.0;
  return cfg;
}

LmConfig donor_config(int32_t vocab) {
  LmConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_emb = 4;
  cfg.hidden = 6;
  cfg.proj = 4;
  cfg.dropout = 0.0;
  return cfg;
}

struct Setup {
  FinetuneModelT<float> model;
  LanguageModelT<float> src_lm;
  LanguageModelT<float> tgt_lm;
};

Setup fresh_setup(uint64_t seed) {
  Rng rng(seed);
  Setup s{make_finetune_model<float>(model_config(), rng),
          make_language_model<float>(donor_config(kSrcVocab), rng),
          make_language_model<float>(donor_config(kTgtVocab), rng)};
  return s;
}

uint64_t tensor_hash(const TensorF& t) {
  return fnv1a64(t->data.data(), t->data.size() * sizeof(float));
}

Batch tgt_mono_batch() { return pad_batch({{kBosId, 4, 5, kEosId}, {kBosId, 10, 9, 8, kEosId}}); }
Batch src_mono_batch() { return pad_batch({{kBosId, 6, 7, kEosId}, {kBosId, 8, kEosId, kPadId, kPadId}}); }

}  // namespace

TEST_SUITE_BEGIN("transfer");

TEST_CASE("mode none transfers nothing and leaves the model unchanged") {
  auto s = fresh_setup(1);
  ParamStore params;
  register_finetune_params(params, s.model);
  const uint64_t before = params.value_hash();
  auto report = init_from_lms(s.model, s.src_lm, s.tgt_lm, AblationMode::named("none"));
  CHECK(report.transferred_count() == 0);
  CHECK(params.value_hash() == before);
}

TEST_CASE("full mode copies every donor tensor bit-exactly") {
  auto s = fresh_setup(2);
  auto report = init_from_lms(s.model, s.src_lm, s.tgt_lm, AblationMode::named("full"));
  CHECK(report.transferred_count() == 14);
  CHECK(tensor_hash(s.model.seq2seq.enc_embedding.table) == tensor_hash(s.src_lm.embedding.table));
  CHECK(tensor_hash(s.model.seq2seq.enc_layers[0].w_x) == tensor_hash(s.src_lm.lstm1.w_x));
  CHECK(tensor_hash(s.model.seq2seq.enc_layers[0].w_h) == tensor_hash(s.src_lm.lstm1.w_h));
  CHECK(tensor_hash(s.model.seq2seq.enc_layers[0].b) == tensor_hash(s.src_lm.lstm1.b));
  CHECK(tensor_hash(s.model.seq2seq.enc_layers[0].w_proj) == tensor_hash(s.src_lm.lstm1.w_proj));
  CHECK(tensor_hash(s.model.seq2seq.dec_embedding.table) == tensor_hash(s.tgt_lm.embedding.table));
  CHECK(tensor_hash(s.model.seq2seq.dec_softmax.w) == tensor_hash(s.tgt_lm.softmax.w));
  CHECK(tensor_hash(s.model.seq2seq.dec_softmax.b) == tensor_hash(s.tgt_lm.softmax.b));
  CHECK(tensor_hash(s.model.aux_src_softmax.w) == tensor_hash(s.src_lm.softmax.w));
}

TEST_CASE("embeddings-only transfers exactly the two embedding tables") {
  auto s = fresh_setup(3);
  auto report = init_from_lms(s.model, s.src_lm, s.tgt_lm, AblationMode::named("embeddings_only"));
  CHECK(report.transferred_count() == 2);
  auto names = report.transferred_names();
  CHECK(std::find(names.begin(), names.end(), "enc.embedding.table") != names.end());
  CHECK(std::find(names.begin(), names.end(), "dec.embedding.table") != names.end());
}

TEST_CASE("transfer is idempotent") {
  auto s = fresh_setup(4);
  init_from_lms(s.model, s.src_lm, s.tgt_lm, AblationMode::named("full"));
  ParamStore params;
  register_finetune_params(params, s.model);
  const uint64_t once = params.value_hash();
  init_from_lms(s.model, s.src_lm, s.tgt_lm, AblationMode::named("full"));
  CHECK(params.value_hash() == once);
}

TEST_CASE("full mode's transferred set contains every other mode's") {
  auto full_setup = fresh_setup(5);
  auto full_report = init_from_lms(full_setup.model, full_setup.src_lm, full_setup.tgt_lm,
                                   AblationMode::named("full"));
  auto full_names = full_report.transferred_names();
  std::set<std::string> full_set(full_names.begin(), full_names.end());
  for (const char* mode : {"decoder_only", "encoder_only", "no_softmax", "embeddings_only", "none"}) {
    auto s = fresh_setup(6);
    auto report = init_from_lms(s.model, s.src_lm, s.tgt_lm, AblationMode::named(mode));
    for (const auto& name : report.transferred_names()) CHECK(full_set.count(name) == 1);
  }
}

TEST_CASE("invalid modes and dim mismatches are rejected") {
  AblationMode bad;
  bad.pretrain_softmax = true;  // softmax without decoder
  CHECK_THROWS_AS(bad.validate(), ContractError);

  auto s = fresh_setup(7);
  Rng rng(8);
  auto fat_cfg = donor_config(kSrcVocab);
  fat_cfg.hidden = 12;  // donor cell larger than the recipient slot
  auto fat_donor = make_language_model<float>(fat_cfg, rng);
  try {
    init_from_lms(s.model, fat_donor, s.tgt_lm, AblationMode::named("full"));
    FAIL("expected TransferError");
  } catch (const TransferError& e) {
    CHECK(std::string(e.what()).find("enc.layer1") != std::string::npos);
  }

  auto s2 = fresh_setup(9);
  auto wrong_vocab = make_language_model<float>(donor_config(kSrcVocab + 1), rng);
  CHECK_THROWS_AS(init_from_lms(s2.model, wrong_vocab, s2.tgt_lm, AblationMode::named("full")),
                  TransferError);
}

TEST_CASE("weights (1,0,0) reduce the joint loss to the seq2seq loss exactly") {
  auto s = fresh_setup(10);
  auto src = pad_batch({{kBosId, 4, 5, kEosId}});
  auto tgt = pad_batch({{kBosId, 6, 7, kEosId}});
  Rng r0(0), r1(0);
  auto joint = joint_loss<float>(nullptr, s.model, &src, &tgt, nullptr, nullptr,
                                 {1.0, 0.0, 0.0}, DropoutSpec(0.0), false, &r0);
  auto direct = seq2seq_loss<float>(nullptr, s.model.seq2seq, src, tgt, DropoutSpec(0.0), false, &r1);
  CHECK(joint.total->scalar() == direct.loss->scalar());
  CHECK(joint.src_lm_loss == nullptr);
  CHECK(joint.tgt_lm_loss == nullptr);
}

TEST_CASE("after full transfer the target LM path reproduces the donor loss bit-exactly") {
  auto s = fresh_setup(11);
  init_from_lms(s.model, s.src_lm, s.tgt_lm, AblationMode::named("full"));
  auto tgt_mono = tgt_mono_batch();
  auto src_mono = src_mono_batch();
  auto src = pad_batch({{kBosId, 4, kEosId}});
  auto tgt = pad_batch({{kBosId, 5, kEosId}});
  Rng r0(0), r1(0);
  auto joint = joint_loss<float>(nullptr, s.model, &src, &tgt, &src_mono, &tgt_mono,
                                 {1.0, 1.0, 1.0}, DropoutSpec(0.0), false, &r0);
  auto donor = lm_loss<float>(nullptr, s.tgt_lm, tgt_mono, DropoutSpec(0.0), false, &r1);
  CHECK(joint.tgt_lm_loss->scalar() == donor.loss->scalar());

  Rng r2(0);
  auto donor_src = lm_loss<float>(nullptr, s.src_lm, src_mono, DropoutSpec(0.0), false, &r2);
  CHECK(joint.src_lm_loss->scalar() == donor_src.loss->scalar());
}

TEST_CASE("total equals the sum of independently computed components") {
  auto s = fresh_setup(12);
  auto src = pad_batch({{kBosId, 4, 5, kEosId}});
  auto tgt = pad_batch({{kBosId, 6, 7, kEosId}});
  auto src_mono = src_mono_batch();
  auto tgt_mono = tgt_mono_batch();
  JointLossWeights w{1.0, 0.5, 2.0};

  Rng r0(0);
  TapeT<float> tape;
  auto joint = joint_loss<float>(&tape, s.model, &src, &tgt, &src_mono, &tgt_mono, w,
                                 DropoutSpec(0.0), false, &r0);

  Rng r1(0), r2(0), r3(0);
  TapeT<float> t1, t2, t3;
  auto s2s = seq2seq_loss<float>(&t1, s.model.seq2seq, src, tgt, DropoutSpec(0.0), false, &r1);
  auto src_fwd = lm_logits_parts<float>(&t2, s.model.seq2seq.enc_embedding,
                                        s.model.seq2seq.enc_layers.front(), s.model.aux_src_softmax,
                                        src_mono, DropoutSpec(0.0), false, &r2);
  auto src_ce = cross_entropy<float>(&t2, src_fwd.logits, src_fwd.targets, src_fwd.target_mask);
  auto tgt_fwd = lm_logits_parts<float>(&t3, s.model.seq2seq.dec_embedding,
                                        s.model.seq2seq.dec_layers.front(), s.model.seq2seq.dec_softmax,
                                        tgt_mono, DropoutSpec(0.0), false, &r3);
  auto tgt_ce = cross_entropy<float>(&t3, tgt_fwd.logits, tgt_fwd.targets, tgt_fwd.target_mask);

  const double expected = 1.0 * s2s.loss->scalar() + 0.5 * src_ce->scalar() + 2.0 * tgt_ce->scalar();
  CHECK(joint.total->scalar() == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("with weights (0,0,1) only the target LM path receives gradients") {
  auto s = fresh_setup(13);
  ParamStore params;
  register_finetune_params(params, s.model);
  params.zero_grads();
  auto tgt_mono = tgt_mono_batch();
  Rng r0(0);
  Tape tape;
  auto joint = joint_loss<float>(&tape, s.model, nullptr, nullptr, nullptr, &tgt_mono,
                                 {0.0, 0.0, 1.0}, DropoutSpec(0.0), false, &r0);
  tape.backward(joint.total);

  const std::set<std::string> lm_path = {"dec.embedding.table", "dec.layer1.w_x", "dec.layer1.w_h",
                                         "dec.layer1.b", "dec.layer1.w_proj", "dec.softmax.w",
                                         "dec.softmax.b"};
  for (const auto& [name, tensor] : params.items()) {
    double norm = 0;
    for (float g : tensor->grad) norm += std::abs(g);
    if (lm_path.count(name)) {
      CHECK(norm > 0);
    } else {
      CHECK(norm == 0.0);
    }
  }
}

TEST_CASE("missing batches with nonzero weight are contract violations") {
  auto s = fresh_setup(14);
  Rng r0(0);
  CHECK_THROWS_AS(joint_loss<float>(nullptr, s.model, nullptr, nullptr, nullptr, nullptr,
                               {1.0, 1.0, 1.0}, DropoutSpec(0.0), false, &r0),
                  ContractError);
}

TEST_SUITE_END();
