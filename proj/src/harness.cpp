#include "s2sp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace s2sp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

std::string donor_corpus_name(DonorCorpus corpus) {
  return corpus == DonorCorpus::parallel_only ? "parallel_only" : "large_monolingual";
}

void write_lm_log(const std::string& path, const std::vector<TrainLogRow>& log) {
  std::vector<std::string> lines = {"step,train_loss,valid_ppl,lr"};
  for (const auto& row : log)
    lines.push_back(std::to_string(row.step) + "," + fmt(row.train_loss) + "," + fmt(row.valid_ppl) +
                    "," + fmt(row.lr));
  write_lines(path, lines);
}

void write_ft_log(const std::string& path, const std::vector<FtLogRow>& log) {
  std::vector<std::string> lines = {"step,train_loss,valid_ppl,valid_bleu,lr"};
  for (const auto& row : log)
    lines.push_back(std::to_string(row.step) + "," + fmt(row.train_loss) + "," + fmt(row.valid_ppl) +
                    "," + fmt(row.valid_bleu) + "," + fmt(row.lr));
  write_lines(path, lines);
}

LanguageModel copy_lm(const LanguageModel& src) {
  LanguageModel out;
  out.embedding.table = make_tensor<float>(src.embedding.table->shape, src.embedding.table->data, true);
  out.lstm1.w_x = make_tensor<float>(src.lstm1.w_x->shape, src.lstm1.w_x->data, true);
  out.lstm1.w_h = make_tensor<float>(src.lstm1.w_h->shape, src.lstm1.w_h->data, true);
  out.lstm1.b = make_tensor<float>(src.lstm1.b->shape, src.lstm1.b->data, true);
  if (src.lstm1.w_proj)
    out.lstm1.w_proj = make_tensor<float>(src.lstm1.w_proj->shape, src.lstm1.w_proj->data, true);
  out.softmax.w = make_tensor<float>(src.softmax.w->shape, src.softmax.w->data, true);
  out.softmax.b = make_tensor<float>(src.softmax.b->shape, src.softmax.b->data, true);
  return out;
}

// Shuffled epoch iterator over a corpus; refills from the shared rng.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, int64_t batch_size, Rng& rng)
      : corpus_(corpus), batch_size_(batch_size), rng_(rng) {}

  Batch next() {
    if (cursor_ >= order_.size()) {
      order_ = epoch_batches(corpus_.size(), batch_size_, rng_);
      cursor_ = 0;
    }
    std::vector<std::vector<int32_t>> rows;
    rows.reserve(order_[cursor_].size());
    for (size_t idx : order_[cursor_]) rows.push_back(corpus_[idx]);
    ++cursor_;
    return pad_batch(rows);
  }

 private:
  const Corpus& corpus_;
  int64_t batch_size_;
  Rng& rng_;
  std::vector<std::vector<size_t>> order_;
  size_t cursor_ = 0;
};

json cell_to_json(const ExperimentConfig& cfg, const CellResult& cell) {
  json j;
  j["config_hash"] = hex64(cfg.config_hash());
  j["version"] = version_string();
  j["seed"] = cell.seed;
  j["mode"] = cell.mode_name;
  j["lm_objective"] = cell.lm_objective;
  j["donor_corpus"] = cell.donor_corpus;
  j["fraction"] = cell.fraction;
  j["best_valid_ppl"] = cell.best_valid_ppl;
  j["best_step"] = cell.best_step;
  j["valid_bleu"] = cell.valid_bleu;
  j["final_train_ppl"] = cell.final_train_ppl;
  j["final_valid_ppl"] = cell.final_valid_ppl;
  j["mono_tgt_ppl_init"] = cell.mono_tgt_ppl_init;
  j["mono_tgt_ppl_final"] = cell.mono_tgt_ppl_final;
  j["steps_run"] = cell.steps_run;
  j["checkpoint_hash"] = hex64(cell.checkpoint_hash);
  json transfer = json::array();
  for (const auto& e : cell.transfer.entries) transfer.push_back({{"param", e.param}, {"source", e.source}});
  j["transfer_report"] = transfer;
  return j;
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of empty set");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Corpus encode_corpus(const Vocab& vocab, const MergeTable& table, const std::vector<std::string>& lines) {
  Corpus out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(encode(vocab, table, line));
  return out;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData data;
  data.task = SynthTask::build(cfg.task);
  data.text = generate(data.task, cfg.data_seed);

  // learn per-side merges over every split so no synthetic sentence ever
  // encodes to UNK
  auto side_freqs = [](std::initializer_list<const std::vector<std::string>*> splits) {
    WordFreqs freqs;
    for (const auto* split : splits)
      for (const auto& line : *split)
        for (const auto& w : split_ws(line)) ++freqs[w];
    return freqs;
  };
  auto src_freqs = side_freqs({&data.text.mono_src, &data.text.parallel_src, &data.text.valid_src,
                               &data.text.test_src});
  auto tgt_freqs = side_freqs({&data.text.mono_tgt, &data.text.parallel_tgt, &data.text.valid_tgt,
                               &data.text.test_tgt});
  data.src_merges = learn_bpe(src_freqs, cfg.bpe_merges);
  data.tgt_merges = learn_bpe(tgt_freqs, cfg.bpe_merges);
  data.src_vocab = Vocab::build(data.src_merges, src_freqs);
  data.tgt_vocab = Vocab::build(data.tgt_merges, tgt_freqs);

  data.mono_src = encode_corpus(data.src_vocab, data.src_merges, data.text.mono_src);
  data.mono_tgt = encode_corpus(data.tgt_vocab, data.tgt_merges, data.text.mono_tgt);
  data.par_src = encode_corpus(data.src_vocab, data.src_merges, data.text.parallel_src);
  data.par_tgt = encode_corpus(data.tgt_vocab, data.tgt_merges, data.text.parallel_tgt);
  data.valid_src = encode_corpus(data.src_vocab, data.src_merges, data.text.valid_src);
  data.valid_tgt = encode_corpus(data.tgt_vocab, data.tgt_merges, data.text.valid_tgt);
  data.test_src = encode_corpus(data.src_vocab, data.src_merges, data.text.test_src);
  data.test_tgt = encode_corpus(data.tgt_vocab, data.tgt_merges, data.text.test_tgt);
  return data;
}

void write_data_dir(const ExperimentConfig& cfg, const PreparedData& data, const std::string& dir) {
  fs::create_directories(dir);
  write_corpora(data.task, data.text, cfg.data_seed, dir);
  save_merges((fs::path(dir) / "src.merges").string(), data.src_merges);
  save_merges((fs::path(dir) / "tgt.merges").string(), data.tgt_merges);
  save_vocab((fs::path(dir) / "src.vocab").string(), data.src_vocab);
  save_vocab((fs::path(dir) / "tgt.vocab").string(), data.tgt_vocab);
}

double bleu_of_model(const Seq2Seq& model, const Corpus& src, const std::vector<std::string>& ref_lines,
                     const Vocab& tgt_vocab, int beam, int64_t limit) {
  size_t n = src.size();
  if (limit > 0) n = std::min(n, static_cast<size_t>(limit));
  Corpus sub(src.begin(), src.begin() + n);
  auto hyps = decode_corpus(model, sub, beam);
  std::vector<TokenSeq> hyp_tokens, ref_tokens;
  hyp_tokens.reserve(n);
  ref_tokens.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    hyp_tokens.push_back(split_ws(decode(tgt_vocab, hyps[i].tokens)));
    ref_tokens.push_back(split_ws(ref_lines[i]));
  }
  return bleu_corpus(hyp_tokens, ref_tokens);
}

Lab::Lab(ExperimentConfig cfg, bool persist) : cfg_(std::move(cfg)), persist_(persist) {
  if (persist_) {
    fs::create_directories(cfg_.out_dir);
    cfg_.save((fs::path(cfg_.out_dir) / "config.json").string());
  }
}

const PreparedData& Lab::data() {
  if (!data_ready_) {
    data_ = prepare_data(cfg_);
    data_ready_ = true;
    if (persist_) write_data_dir(cfg_, data_, (fs::path(cfg_.out_dir) / "data").string());
  }
  return data_;
}

const DonorSet& Lab::donors(uint64_t seed, DonorCorpus corpus) {
  const auto key = std::make_pair(seed, static_cast<int>(corpus));
  auto it = donor_cache_.find(key);
  if (it != donor_cache_.end()) return it->second;

  const auto& d = data();
  const Corpus& src_corpus = corpus == DonorCorpus::parallel_only ? d.par_src : d.mono_src;
  const Corpus& tgt_corpus = corpus == DonorCorpus::parallel_only ? d.par_tgt : d.mono_tgt;

  DonorSet set;
  {
    Rng rng = Rng(seed).fork("lm_src_" + donor_corpus_name(corpus));
    auto result = train_lm(cfg_.lm_config(d.src_vocab.size()), src_corpus, d.valid_src, rng);
    set.src = result.model;
    set.src_ppl = result.best_valid_ppl;
    set.src_log = result.log;
  }
  if (cfg_.tied_donor) {
    if (d.src_vocab.tokens != d.tgt_vocab.tokens)
      throw ContractError(
          "tied_donor requires identical source/target vocabularies (set task.shared_surface)");
    // one donor initializes both sides; weights are copied, never shared
    set.tgt = copy_lm(set.src);
    set.tgt_ppl = set.src_ppl;
    set.tgt_log = set.src_log;
  } else {
    Rng rng = Rng(seed).fork("lm_tgt_" + donor_corpus_name(corpus));
    auto result = train_lm(cfg_.lm_config(d.tgt_vocab.size()), tgt_corpus, d.valid_tgt, rng);
    set.tgt = result.model;
    set.tgt_ppl = result.best_valid_ppl;
    set.tgt_log = result.log;
  }

  auto [pos, inserted] = donor_cache_.emplace(key, std::move(set));
  if (persist_) {
    const auto dir = fs::path(cfg_.out_dir) / "donors";
    fs::create_directories(dir);
    const std::string tag = donor_corpus_name(corpus) + "_seed" + std::to_string(seed);
    auto save_side = [&](const char* side, const LanguageModel& model,
                         const std::vector<TrainLogRow>& log) {
      ParamStore params;
      register_lm_params(params, model);
      save_checkpoint((dir / (std::string(side) + "_" + tag + ".s2sp")).string(),
                      checkpoint_from_params(params, 0, 0));
      write_lm_log((dir / (std::string(side) + "_" + tag + ".csv")).string(), log);
    };
    save_side("src", pos->second.src, pos->second.src_log);
    save_side("tgt", pos->second.tgt, pos->second.tgt_log);
  }
  return pos->second;
}

std::string Lab::cell_label(const AblationMode& mode, double fraction) const {
  std::string label = mode_to_string(mode);
  if (!mode.lm_objective) label += "_no_lm_objective";
  if (mode.donor_corpus == DonorCorpus::parallel_only) label += "_parallel_donor";
  if (fraction < 1.0) {
    std::ostringstream os;
    os << "_frac" << static_cast<int>(std::llround(fraction * 100));
    label += os.str();
  }
  return label;
}

CellResult Lab::run_finetune(uint64_t seed, AblationMode mode, double fraction) {
  mode.validate();
  const std::string label = cell_label(mode, fraction);
  const std::string cache_key = label + "#" + std::to_string(seed);
  auto cached = cell_cache_.find(cache_key);
  if (cached != cell_cache_.end()) return cached->second;

  const auto& d = data();
  CellResult cell;
  cell.seed = seed;
  cell.mode_name = mode_to_string(mode);
  cell.lm_objective = mode.lm_objective;
  cell.donor_corpus = donor_corpus_name(mode.donor_corpus);
  cell.fraction = fraction;

  Rng rng = Rng(seed).fork("finetune");
  FinetuneModel model =
      make_finetune_model<float>(cfg_.seq2seq_config(d.src_vocab.size(), d.tgt_vocab.size()), rng);

  if (mode.any_transfer()) {
    const DonorSet& donor = donors(seed, mode.donor_corpus);
    cell.transfer = init_from_lms(model, donor.src, donor.tgt, mode);
  } else {
    // nothing to copy; the report still lists every parameter as random
    Rng dummy(0);
    auto src_stub = make_language_model<float>(cfg_.lm_config(d.src_vocab.size()), dummy);
    auto tgt_stub = make_language_model<float>(cfg_.lm_config(d.tgt_vocab.size()), dummy);
    cell.transfer = init_from_lms(model, src_stub, tgt_stub, mode);
  }

  ParamStore params;
  register_finetune_params(params, model);
  Adam adam(params);
  EarlyStopper stopper(cfg_.finetune.patience);
  DropoutSpec drop(cfg_.dropout);
  JointLossWeights weights = cfg_.weights;
  if (!mode.lm_objective) {
    weights.src_lm = 0;
    weights.tgt_lm = 0;
  }

  // labeled subset for the data-fraction study (deterministic, nested)
  Corpus par_src, par_tgt;
  if (fraction < 1.0) {
    auto idx = subset_indices(d.par_src.size(), fraction, Rng(seed).fork("subset").state());
    for (size_t i : idx) {
      par_src.push_back(d.par_src[i]);
      par_tgt.push_back(d.par_tgt[i]);
    }
  } else {
    par_src = d.par_src;
    par_tgt = d.par_tgt;
  }

  cell.mono_tgt_ppl_init = tgt_lm_path_perplexity(model, d.valid_tgt, cfg_.finetune.eval_batch_size);

  // paired-order streams: parallel pairs are drawn jointly, monolingual
  // streams advance independently
  struct PairStream {
    const Corpus& src;
    const Corpus& tgt;
    int64_t batch_size;
    Rng& rng;
    std::vector<std::vector<size_t>> order;
    size_t cursor = 0;
    std::pair<Batch, Batch> next() {
      if (cursor >= order.size()) {
        order = epoch_batches(src.size(), batch_size, rng);
        cursor = 0;
      }
      std::vector<std::vector<int32_t>> s, t;
      for (size_t idx : order[cursor]) {
        s.push_back(src[idx]);
        t.push_back(tgt[idx]);
      }
      ++cursor;
      return {pad_batch(s), pad_batch(t)};
    }
  };
  PairStream parallel{par_src, par_tgt, cfg_.finetune.batch_size, rng};
  BatchStream src_mono(d.mono_src, cfg_.finetune.batch_size, rng);
  BatchStream tgt_mono(d.mono_tgt, cfg_.finetune.batch_size, rng);

  auto valid_ppl = [&]() {
    return seq2seq_perplexity(model.seq2seq, d.valid_src, d.valid_tgt, cfg_.finetune.eval_batch_size);
  };
  auto valid_bleu_subset = [&]() {
    return bleu_of_model(model.seq2seq, d.valid_src, d.text.valid_tgt, d.tgt_vocab,
                         cfg_.finetune.eval_beam, cfg_.finetune.eval_bleu_limit);
  };

  ParamStore best = params.snapshot();
  double last_loss = 0;
  for (int64_t step = 1; step <= cfg_.finetune.max_steps; ++step) {
    auto [src_batch, tgt_batch] = parallel.next();
    Batch src_mono_batch, tgt_mono_batch;
    const Batch* src_mono_ptr = nullptr;
    const Batch* tgt_mono_ptr = nullptr;
    if (weights.src_lm > 0) {
      src_mono_batch = src_mono.next();
      src_mono_ptr = &src_mono_batch;
    }
    if (weights.tgt_lm > 0) {
      tgt_mono_batch = tgt_mono.next();
      tgt_mono_ptr = &tgt_mono_batch;
    }

    Tape tape;
    params.zero_grads();
    auto joint = joint_loss<float>(&tape, model, &src_batch, &tgt_batch, src_mono_ptr, tgt_mono_ptr,
                                   weights, drop, true, &rng);
    last_loss = joint.total->scalar();
    if (!std::isfinite(last_loss))
      throw TrainingError("finetune(" + label + "): loss diverged at step " + std::to_string(step));
    tape.backward(joint.total);
    clip_global_norm(params, cfg_.finetune.clip_norm);
    adam.step(params, lr_at(cfg_.finetune.lr, step - 1));
    cell.steps_run = step;

    if (step % cfg_.finetune.eval_every == 0 || step == cfg_.finetune.max_steps) {
      const double ppl = valid_ppl();
      const double bleu = valid_bleu_subset();
      cell.log.push_back({step, last_loss, ppl, bleu, lr_at(cfg_.finetune.lr, step - 1)});
      auto decision = stopper.update(ppl);
      if (decision.improved) {
        best = params.snapshot();
        cell.best_valid_ppl = ppl;
        cell.best_step = step;
      }
      if (decision.stop) break;
    }
  }

  // end-of-run probes (before restoring the best checkpoint)
  const int64_t probe = std::min<int64_t>(cfg_.finetune.train_ppl_limit,
                                          static_cast<int64_t>(par_src.size()));
  Corpus train_probe_src(par_src.begin(), par_src.begin() + probe);
  Corpus train_probe_tgt(par_tgt.begin(), par_tgt.begin() + probe);
  cell.final_train_ppl =
      seq2seq_perplexity(model.seq2seq, train_probe_src, train_probe_tgt, cfg_.finetune.eval_batch_size);
  cell.final_valid_ppl = valid_ppl();
  cell.mono_tgt_ppl_final = tgt_lm_path_perplexity(model, d.valid_tgt, cfg_.finetune.eval_batch_size);

  params.restore(best);
  cell.valid_bleu = bleu_of_model(model.seq2seq, d.valid_src, d.text.valid_tgt, d.tgt_vocab,
                                  cfg_.finetune.eval_beam, 0);
  auto ckpt = checkpoint_from_params(params, rng.state(), static_cast<uint64_t>(cell.best_step), &adam);
  cell.checkpoint_hash = ckpt.value_hash();

  if (persist_) {
    const auto dir = fs::path(cfg_.out_dir) / "cells" / (label + "_seed" + std::to_string(seed));
    fs::create_directories(dir);
    save_checkpoint((dir / "checkpoint.s2sp").string(), ckpt);
    write_ft_log((dir / "log.csv").string(), cell.log);
    write_text((dir / "result.json").string(), cell_to_json(cfg_, cell).dump(2) + "\n");
  }
  cell_cache_.emplace(cache_key, cell);
  return cell;
}

std::vector<std::pair<std::string, DonorSet*>> Lab::run_pretrain() {
  std::vector<std::pair<std::string, DonorSet*>> out;
  json summary = json::array();
  for (uint64_t seed : cfg_.seeds) {
    auto& set = const_cast<DonorSet&>(donors(seed, cfg_.mode.donor_corpus));
    out.emplace_back("seed" + std::to_string(seed), &set);
    summary.push_back({{"config_hash", hex64(cfg_.config_hash())},
                       {"version", version_string()},
                       {"seed", seed},
                       {"donor_corpus", donor_corpus_name(cfg_.mode.donor_corpus)},
                       {"src_valid_ppl", set.src_ppl},
                       {"tgt_valid_ppl", set.tgt_ppl},
                       {"optimal_ppl_floor", optimal_lm_perplexity(data().task)},
                       {"tied_donor", cfg_.tied_donor}});
  }
  if (persist_)
    write_text((fs::path(cfg_.out_dir) / "pretrain.json").string(), summary.dump(2) + "\n");
  return out;
}

AblationReport Lab::run_ablation() {
  struct GridCell {
    std::string label;
    AblationMode mode;
    double reference_delta;
    bool has_reference;
  };
  // full-scale validation-BLEU drops from the source study, context only
  std::vector<GridCell> grid;
  auto with_flags = [](const char* name, bool lm_obj, DonorCorpus corpus) {
    AblationMode m = AblationMode::named(name);
    m.lm_objective = lm_obj;
    m.donor_corpus = corpus;
    return m;
  };
  grid.push_back({"full", with_flags("full", true, DonorCorpus::large_monolingual), 0.0, true});
  grid.push_back({"decoder_only", with_flags("decoder_only", true, DonorCorpus::large_monolingual), -1.0, true});
  grid.push_back({"encoder_only", with_flags("encoder_only", true, DonorCorpus::large_monolingual), -1.6, true});
  grid.push_back({"no_softmax", with_flags("no_softmax", true, DonorCorpus::large_monolingual), -1.6, true});
  grid.push_back({"embeddings_only", with_flags("embeddings_only", true, DonorCorpus::large_monolingual), 0.0, false});
  grid.push_back({"none", with_flags("none", true, DonorCorpus::large_monolingual), -2.0, true});
  grid.push_back({"full_no_lm_objective", with_flags("full", false, DonorCorpus::large_monolingual), 0.0, false});
  grid.push_back({"none_no_lm_objective", with_flags("none", false, DonorCorpus::large_monolingual), 0.0, false});
  grid.push_back({"full_parallel_donor", with_flags("full", true, DonorCorpus::parallel_only), 0.0, false});

  AblationReport report;
  std::vector<double> full_bleus;
  for (const auto& gc : grid) {
    std::vector<double> bleus;
    for (uint64_t seed : cfg_.seeds) {
      auto cell = run_finetune(seed, gc.mode, 1.0);
      report.cells.push_back(cell);
      bleus.push_back(cell.valid_bleu);
    }
    if (gc.label == "full") full_bleus = bleus;
    AblationRow row;
    row.label = gc.label;
    row.donor_corpus = donor_corpus_name(gc.mode.donor_corpus);
    row.lm_objective = gc.mode.lm_objective;
    row.median_bleu = median(bleus);
    row.seed_count = static_cast<int>(bleus.size());
    row.full_scale_reference_delta = gc.reference_delta;
    row.has_reference = gc.has_reference;
    report.rows.push_back(row);
  }
  report.full_median_bleu = median(full_bleus);
  for (auto& row : report.rows) row.delta_vs_full = row.median_bleu - report.full_median_bleu;

  if (persist_) {
    std::vector<std::string> csv = {
        "label,donor_corpus,lm_objective,median_bleu,delta_vs_full,seeds,full_scale_reference_delta,"
        "config_hash,version"};
    json rows = json::array();
    for (const auto& row : report.rows) {
      csv.push_back(row.label + "," + row.donor_corpus + "," + (row.lm_objective ? "1" : "0") + "," +
                    fmt(row.median_bleu) + "," + fmt(row.delta_vs_full) + "," +
                    std::to_string(row.seed_count) + "," +
                    (row.has_reference ? fmt(row.full_scale_reference_delta) : "") + "," +
                    hex64(cfg_.config_hash()) + "," + version_string());
      json jrow = {{"label", row.label},
                   {"donor_corpus", row.donor_corpus},
                   {"lm_objective", row.lm_objective},
                   {"median_bleu", row.median_bleu},
                   {"delta_vs_full", row.delta_vs_full},
                   {"seeds", row.seed_count},
                   {"config_hash", hex64(cfg_.config_hash())},
                   {"version", version_string()}};
      if (row.has_reference) jrow["full_scale_reference_delta"] = row.full_scale_reference_delta;
      rows.push_back(jrow);
    }
    write_lines((fs::path(cfg_.out_dir) / "ablation.csv").string(), csv);
    write_text((fs::path(cfg_.out_dir) / "ablation.json").string(), rows.dump(2) + "\n");
  }
  return report;
}

DataFractionReport Lab::run_data_fraction(const std::vector<double>& fractions) {
  if (fractions.empty()) throw ContractError("data fraction study needs at least one fraction");
  DataFractionReport report;
  for (double f : fractions) {
    std::vector<double> pre, none;
    for (uint64_t seed : cfg_.seeds) {
      AblationMode full = AblationMode::named("full");
      AblationMode baseline = AblationMode::named("none");
      // both arms keep the LM objective
      full.lm_objective = true;
      baseline.lm_objective = true;
      auto cell_full = run_finetune(seed, full, f);
      auto cell_none = run_finetune(seed, baseline, f);
      report.cells.push_back(cell_full);
      report.cells.push_back(cell_none);
      pre.push_back(cell_full.valid_bleu);
      none.push_back(cell_none.valid_bleu);
    }
    FractionRow row;
    row.fraction = f;
    row.pretrained_median_bleu = median(pre);
    row.none_median_bleu = median(none);
    row.gap = row.pretrained_median_bleu - row.none_median_bleu;
    row.seed_count = static_cast<int>(pre.size());
    report.rows.push_back(row);
  }

  if (persist_) {
    std::vector<std::string> csv = {
        "fraction,pretrained_median_bleu,none_median_bleu,gap,seeds,config_hash,version"};
    json rows = json::array();
    for (const auto& row : report.rows) {
      csv.push_back(fmt(row.fraction) + "," + fmt(row.pretrained_median_bleu) + "," +
                    fmt(row.none_median_bleu) + "," + fmt(row.gap) + "," +
                    std::to_string(row.seed_count) + "," + hex64(cfg_.config_hash()) + "," +
                    version_string());
      rows.push_back({{"fraction", row.fraction},
                      {"pretrained_median_bleu", row.pretrained_median_bleu},
                      {"none_median_bleu", row.none_median_bleu},
                      {"gap", row.gap},
                      {"seeds", row.seed_count},
                      {"config_hash", hex64(cfg_.config_hash())},
                      {"version", version_string()}});
    }
    write_lines((fs::path(cfg_.out_dir) / "data_fraction.csv").string(), csv);
    write_text((fs::path(cfg_.out_dir) / "data_fraction.json").string(), rows.dump(2) + "\n");
  }
  return report;
}

RegularizationReport Lab::run_regularization() {
  RegularizationReport report;
  std::vector<double> gap_with, gap_without, forget_with, forget_without;
  for (uint64_t seed : cfg_.seeds) {
    AblationMode with_obj = AblationMode::named("full");
    with_obj.lm_objective = true;
    AblationMode without_obj = AblationMode::named("full");
    without_obj.lm_objective = false;
    auto cell_with = run_finetune(seed, with_obj, 1.0);
    auto cell_without = run_finetune(seed, without_obj, 1.0);
    report.cells.push_back(cell_with);
    report.cells.push_back(cell_without);
    gap_with.push_back(cell_with.generalization_gap());
    gap_without.push_back(cell_without.generalization_gap());
    forget_with.push_back(cell_with.forgetting());
    forget_without.push_back(cell_without.forgetting());
  }
  report.median_gap_with_obj = median(gap_with);
  report.median_gap_without_obj = median(gap_without);
  report.median_forgetting_with_obj = median(forget_with);
  report.median_forgetting_without_obj = median(forget_without);

  if (persist_) {
    std::vector<std::string> csv = {
        "metric,with_lm_objective,without_lm_objective,seeds,config_hash,version"};
    csv.push_back("generalization_gap," + fmt(report.median_gap_with_obj) + "," +
                  fmt(report.median_gap_without_obj) + "," + std::to_string(cfg_.seeds.size()) + "," +
                  hex64(cfg_.config_hash()) + "," + version_string());
    csv.push_back("mono_tgt_ppl_drift," + fmt(report.median_forgetting_with_obj) + "," +
                  fmt(report.median_forgetting_without_obj) + "," + std::to_string(cfg_.seeds.size()) +
                  "," + hex64(cfg_.config_hash()) + "," + version_string());
    json j = {{"generalization_gap_with_obj", report.median_gap_with_obj},
              {"generalization_gap_without_obj", report.median_gap_without_obj},
              {"mono_tgt_ppl_drift_with_obj", report.median_forgetting_with_obj},
              {"mono_tgt_ppl_drift_without_obj", report.median_forgetting_without_obj},
              {"seeds", cfg_.seeds.size()},
              {"config_hash", hex64(cfg_.config_hash())},
              {"version", version_string()}};
    write_lines((fs::path(cfg_.out_dir) / "regularization.csv").string(), csv);
    write_text((fs::path(cfg_.out_dir) / "regularization.json").string(), j.dump(2) + "\n");
  }
  return report;
}

Seq2Seq seq2seq_from_checkpoint(const Checkpoint& ckpt) {
  Seq2Seq model;
  auto need = [&](const std::string& name) {
    auto t = ckpt.find(name);
    if (!t) throw IoError("checkpoint is missing tensor " + name);
    t->requires_grad = true;
    return t;
  };
  auto load_lstm = [&](const std::string& prefix) {
    Lstm layer;
    layer.w_x = need(prefix + ".w_x");
    layer.w_h = need(prefix + ".w_h");
    layer.b = need(prefix + ".b");
    layer.w_proj = ckpt.find(prefix + ".w_proj");
    if (layer.w_proj) layer.w_proj->requires_grad = true;
    return layer;
  };

  model.enc_embedding.table = need("enc.embedding.table");
  model.dec_embedding.table = need("dec.embedding.table");
  for (int k = 1; ckpt.find("enc.layer" + std::to_string(k) + ".w_x"); ++k)
    model.enc_layers.push_back(load_lstm("enc.layer" + std::to_string(k)));
  for (int k = 1; ckpt.find("dec.layer" + std::to_string(k) + ".w_x"); ++k)
    model.dec_layers.push_back(load_lstm("dec.layer" + std::to_string(k)));
  model.attn_w = need("attn.w_a");
  model.dec_softmax.w = need("dec.softmax.w");
  model.dec_softmax.b = need("dec.softmax.b");
  model.validate();
  return model;
}

}  // namespace s2sp
