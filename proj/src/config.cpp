#include "s2sp/config.hpp"

#include <fstream>

#include <json.hpp>

namespace s2sp {

using nlohmann::json;

namespace {

// Named modes cover the grid; arbitrary flag combinations round-trip through
// the flags object.
json mode_to_json(const AblationMode& m) {
  json j;
  j["pretrain_encoder"] = m.pretrain_encoder;
  j["pretrain_decoder"] = m.pretrain_decoder;
  j["pretrain_softmax"] = m.pretrain_softmax;
  j["pretrain_embeddings_only"] = m.pretrain_embeddings_only;
  j["lm_objective"] = m.lm_objective;
  j["donor_corpus"] = m.donor_corpus == DonorCorpus::parallel_only ? "parallel_only" : "large_monolingual";
  return j;
}

AblationMode mode_from_json(const json& j) {
  AblationMode m;
  m.pretrain_encoder = j.at("pretrain_encoder").get<bool>();
  m.pretrain_decoder = j.at("pretrain_decoder").get<bool>();
  m.pretrain_softmax = j.at("pretrain_softmax").get<bool>();
  m.pretrain_embeddings_only = j.at("pretrain_embeddings_only").get<bool>();
  m.lm_objective = j.at("lm_objective").get<bool>();
  const std::string corpus = j.at("donor_corpus").get<std::string>();
  if (corpus == "parallel_only")
    m.donor_corpus = DonorCorpus::parallel_only;
  else if (corpus == "large_monolingual")
    m.donor_corpus = DonorCorpus::large_monolingual;
  else
    throw ContractError("config: unknown donor_corpus '" + corpus + "'");
  m.validate();
  return m;
}

json schedule_to_json(const LrSchedule& s) {
  return {{"base_lr", s.base_lr},
          {"decay_factor", s.decay_factor},
          {"decay_every", s.decay_every},
          {"warm_steps", s.warm_steps}};
}

LrSchedule schedule_from_json(const json& j) {
  return {j.at("base_lr").get<double>(), j.at("decay_factor").get<double>(),
          j.at("decay_every").get<int64_t>(), j.at("warm_steps").get<int64_t>()};
}

}  // namespace

Seq2SeqConfig ExperimentConfig::seq2seq_config(int32_t src_vocab, int32_t tgt_vocab) const {
  Seq2SeqConfig cfg;
  cfg.src_vocab = src_vocab;
  cfg.tgt_vocab = tgt_vocab;
  cfg.d_emb = d_emb;
  cfg.hidden = hidden;
  cfg.proj = proj;
  cfg.upper_hidden = upper_hidden;
  cfg.enc_layers = enc_layers;
  cfg.dec_layers = dec_layers;
  cfg.dropout = dropout;
  cfg.attn_init_scale = attn_init_scale;
  return cfg;
}

LmConfig ExperimentConfig::lm_config(int32_t vocab) const {
  LmConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_emb = d_emb;
  cfg.hidden = hidden;
  cfg.proj = proj;
  cfg.dropout = dropout;
  cfg.train = lm_train;
  return cfg;
}

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["task"] = {{"vocab_src", task.vocab_src},
               {"vocab_tgt", task.vocab_tgt},
               {"len_min", task.len_min},
               {"len_max", task.len_max},
               {"mono_src", task.mono_src},
               {"mono_tgt", task.mono_tgt},
               {"parallel", task.parallel},
               {"valid", task.valid},
               {"test", task.test},
               {"structure_seed", task.structure_seed},
               {"sharpness", task.sharpness},
               {"shared_surface", task.shared_surface}};
  j["bpe_merges"] = bpe_merges;
  j["model"] = {{"d_emb", d_emb},           {"hidden", hidden},
                {"proj", proj},             {"upper_hidden", upper_hidden},
                {"enc_layers", enc_layers}, {"dec_layers", dec_layers},
                {"dropout", dropout},       {"attn_init_scale", attn_init_scale}};
  j["lm_train"] = {{"max_steps", lm_train.max_steps},
                   {"batch_size", lm_train.batch_size},
                   {"lr", schedule_to_json(lm_train.lr)},
                   {"clip_norm", lm_train.clip_norm},
                   {"eval_every", lm_train.eval_every},
                   {"patience", lm_train.patience},
                   {"eval_batch_size", lm_train.eval_batch_size}};
  j["finetune"] = {{"max_steps", finetune.max_steps},
                   {"batch_size", finetune.batch_size},
                   {"lr", schedule_to_json(finetune.lr)},
                   {"clip_norm", finetune.clip_norm},
                   {"eval_every", finetune.eval_every},
                   {"patience", finetune.patience},
                   {"eval_batch_size", finetune.eval_batch_size},
                   {"eval_beam", finetune.eval_beam},
                   {"eval_bleu_limit", finetune.eval_bleu_limit},
                   {"train_ppl_limit", finetune.train_ppl_limit}};
  j["mode"] = mode_to_json(mode);
  j["weights"] = {{"seq2seq", weights.seq2seq}, {"src_lm", weights.src_lm}, {"tgt_lm", weights.tgt_lm}};
  j["tied_donor"] = tied_donor;
  j["seeds"] = seeds;
  j["data_seed"] = data_seed;
  j["out_dir"] = out_dir;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig cfg;
  if (j.contains("task")) {
    const auto& t = j["task"];
    if (t.contains("vocab_src")) cfg.task.vocab_src = t["vocab_src"].get<int32_t>();
    if (t.contains("vocab_tgt")) cfg.task.vocab_tgt = t["vocab_tgt"].get<int32_t>();
    if (t.contains("len_min")) cfg.task.len_min = t["len_min"].get<int>();
    if (t.contains("len_max")) cfg.task.len_max = t["len_max"].get<int>();
    if (t.contains("mono_src")) cfg.task.mono_src = t["mono_src"].get<int64_t>();
    if (t.contains("mono_tgt")) cfg.task.mono_tgt = t["mono_tgt"].get<int64_t>();
    if (t.contains("parallel")) cfg.task.parallel = t["parallel"].get<int64_t>();
    if (t.contains("valid")) cfg.task.valid = t["valid"].get<int64_t>();
    if (t.contains("test")) cfg.task.test = t["test"].get<int64_t>();
    if (t.contains("structure_seed")) cfg.task.structure_seed = t["structure_seed"].get<uint64_t>();
    if (t.contains("sharpness")) cfg.task.sharpness = t["sharpness"].get<double>();
    if (t.contains("shared_surface")) cfg.task.shared_surface = t["shared_surface"].get<bool>();
  }
  if (j.contains("bpe_merges")) cfg.bpe_merges = j["bpe_merges"].get<int>();
  if (j.contains("model")) {
    const auto& m = j["model"];
    if (m.contains("d_emb")) cfg.d_emb = m["d_emb"].get<int64_t>();
    if (m.contains("hidden")) cfg.hidden = m["hidden"].get<int64_t>();
    if (m.contains("proj")) cfg.proj = m["proj"].get<int64_t>();
    if (m.contains("upper_hidden")) cfg.upper_hidden = m["upper_hidden"].get<int64_t>();
    if (m.contains("enc_layers")) cfg.enc_layers = m["enc_layers"].get<int>();
    if (m.contains("dec_layers")) cfg.dec_layers = m["dec_layers"].get<int>();
    if (m.contains("dropout")) cfg.dropout = m["dropout"].get<double>();
    if (m.contains("attn_init_scale")) cfg.attn_init_scale = m["attn_init_scale"].get<double>();
  }
  if (j.contains("lm_train")) {
    const auto& t = j["lm_train"];
    if (t.contains("max_steps")) cfg.lm_train.max_steps = t["max_steps"].get<int64_t>();
    if (t.contains("batch_size")) cfg.lm_train.batch_size = t["batch_size"].get<int64_t>();
    if (t.contains("lr")) cfg.lm_train.lr = schedule_from_json(t["lr"]);
    if (t.contains("clip_norm")) cfg.lm_train.clip_norm = t["clip_norm"].get<double>();
    if (t.contains("eval_every")) cfg.lm_train.eval_every = t["eval_every"].get<int64_t>();
    if (t.contains("patience")) cfg.lm_train.patience = t["patience"].get<int>();
    if (t.contains("eval_batch_size")) cfg.lm_train.eval_batch_size = t["eval_batch_size"].get<int64_t>();
  }
  if (j.contains("finetune")) {
    const auto& t = j["finetune"];
    if (t.contains("max_steps")) cfg.finetune.max_steps = t["max_steps"].get<int64_t>();
    if (t.contains("batch_size")) cfg.finetune.batch_size = t["batch_size"].get<int64_t>();
    if (t.contains("lr")) cfg.finetune.lr = schedule_from_json(t["lr"]);
    if (t.contains("clip_norm")) cfg.finetune.clip_norm = t["clip_norm"].get<double>();
    if (t.contains("eval_every")) cfg.finetune.eval_every = t["eval_every"].get<int64_t>();
    if (t.contains("patience")) cfg.finetune.patience = t["patience"].get<int>();
    if (t.contains("eval_batch_size")) cfg.finetune.eval_batch_size = t["eval_batch_size"].get<int64_t>();
    if (t.contains("eval_beam")) cfg.finetune.eval_beam = t["eval_beam"].get<int>();
    if (t.contains("eval_bleu_limit")) cfg.finetune.eval_bleu_limit = t["eval_bleu_limit"].get<int64_t>();
    if (t.contains("train_ppl_limit")) cfg.finetune.train_ppl_limit = t["train_ppl_limit"].get<int64_t>();
  }
  if (j.contains("mode")) {
    if (j["mode"].is_string()) {
      cfg.mode = AblationMode::named(j["mode"].get<std::string>());
    } else {
      cfg.mode = mode_from_json(j["mode"]);
    }
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    if (w.contains("seq2seq")) cfg.weights.seq2seq = w["seq2seq"].get<double>();
    if (w.contains("src_lm")) cfg.weights.src_lm = w["src_lm"].get<double>();
    if (w.contains("tgt_lm")) cfg.weights.tgt_lm = w["tgt_lm"].get<double>();
  }
  if (j.contains("tied_donor")) cfg.tied_donor = j["tied_donor"].get<bool>();
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
  if (j.contains("data_seed")) cfg.data_seed = j["data_seed"].get<uint64_t>();
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  cfg.task.validate();
  if (cfg.seeds.empty()) throw ContractError("config: need at least one seed");
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config: " + path);
  out << to_json_string() << "\n";
}

uint64_t ExperimentConfig::config_hash() const { return fnv1a64(to_json_string()); }

std::string mode_to_string(const AblationMode& mode) {
  for (const char* name :
       {"full", "decoder_only", "encoder_only", "no_softmax", "embeddings_only", "none"}) {
    AblationMode ref = AblationMode::named(name);
    if (ref.pretrain_encoder == mode.pretrain_encoder && ref.pretrain_decoder == mode.pretrain_decoder &&
        ref.pretrain_softmax == mode.pretrain_softmax &&
        ref.pretrain_embeddings_only == mode.pretrain_embeddings_only)
      return name;
  }
  return "custom";
}

AblationMode mode_from_string(const std::string& name, bool lm_objective, const std::string& donor_corpus) {
  AblationMode m = AblationMode::named(name);
  m.lm_objective = lm_objective;
  if (donor_corpus == "parallel_only")
    m.donor_corpus = DonorCorpus::parallel_only;
  else if (donor_corpus == "large_monolingual" || donor_corpus == "large")
    m.donor_corpus = DonorCorpus::large_monolingual;
  else
    throw ContractError("unknown donor corpus '" + donor_corpus + "'");
  return m;
}

}  // namespace s2sp
