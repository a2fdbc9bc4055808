#pragma once

// Experiment orchestration: data preparation, donor pretraining, fine-tuning
// cells, and the ablation / data-fraction / regularization studies. Every
// emitted number is a pure function of (config, seed); reports carry the
// config hash, seed and library version on each row.

#include <map>
#include <string>
#include <vector>

#include "s2sp/bpe.hpp"
#include "s2sp/checkpoint.hpp"
#include "s2sp/config.hpp"
#include "s2sp/decode.hpp"
#include "s2sp/metrics.hpp"

namespace s2sp {

struct PreparedData {
  SynthTask task;
  GeneratedCorpora text;
  MergeTable src_merges, tgt_merges;
  Vocab src_vocab, tgt_vocab;
  Corpus mono_src, mono_tgt;
  Corpus par_src, par_tgt;
  Corpus valid_src, valid_tgt;
  Corpus test_src, test_tgt;
};

Corpus encode_corpus(const Vocab& vocab, const MergeTable& table, const std::vector<std::string>& lines);

// Regenerates corpora, learns per-side BPE and encodes all splits. Pure
// function of the config.
PreparedData prepare_data(const ExperimentConfig& cfg);

// Persists corpora, merge tables, vocab files and the manifest.
void write_data_dir(const ExperimentConfig& cfg, const PreparedData& data, const std::string& dir);

struct DonorSet {
  LanguageModel src;
  LanguageModel tgt;
  double src_ppl = 0;
  double tgt_ppl = 0;
  std::vector<TrainLogRow> src_log, tgt_log;
};

struct FtLogRow {
  int64_t step = 0;
  double train_loss = 0;
  double valid_ppl = 0;
  double valid_bleu = 0;  // periodic subset BLEU
  double lr = 0;
};

// One fine-tuning run.
struct CellResult {
  uint64_t seed = 0;
  std::string mode_name;
  bool lm_objective = true;
  std::string donor_corpus = "large_monolingual";
  double fraction = 1.0;

  double best_valid_ppl = 0;
  int64_t best_step = 0;
  double valid_bleu = 0;  // full validation set, best checkpoint, eval beam
  double final_train_ppl = 0;
  double final_valid_ppl = 0;
  double mono_tgt_ppl_init = 0;
  double mono_tgt_ppl_final = 0;
  int64_t steps_run = 0;
  uint64_t checkpoint_hash = 0;
  TransferReport transfer;
  std::vector<FtLogRow> log;

  double generalization_gap() const { return final_valid_ppl - final_train_ppl; }
  double forgetting() const { return mono_tgt_ppl_final - mono_tgt_ppl_init; }
};

struct AblationRow {
  std::string label;
  std::string donor_corpus;
  bool lm_objective = true;
  double median_bleu = 0;
  double delta_vs_full = 0;
  int seed_count = 0;
  // validation-BLEU drops reported by the full-scale study, for context only
  double full_scale_reference_delta = 0;
  bool has_reference = false;
};

struct AblationReport {
  double full_median_bleu = 0;
  std::vector<AblationRow> rows;
  std::vector<CellResult> cells;
};

struct FractionRow {
  double fraction = 1.0;
  double pretrained_median_bleu = 0;
  double none_median_bleu = 0;
  double gap = 0;
  int seed_count = 0;
};

struct DataFractionReport {
  std::vector<FractionRow> rows;
  std::vector<CellResult> cells;
};

struct RegularizationReport {
  double median_gap_with_obj = 0;     // final valid - train perplexity gap
  double median_gap_without_obj = 0;
  double median_forgetting_with_obj = 0;  // target mono ppl drift via LM path
  double median_forgetting_without_obj = 0;
  std::vector<CellResult> cells;
};

double median(std::vector<double> values);

// Experiment harness bound to one config. Donors are trained once per
// (seed, donor corpus) and reused across cells.
class Lab {
 public:
  // persist=false keeps everything in memory (used by fast tests).
  explicit Lab(ExperimentConfig cfg, bool persist = true);

  const ExperimentConfig& config() const { return cfg_; }
  const PreparedData& data();
  const DonorSet& donors(uint64_t seed, DonorCorpus corpus);

  CellResult run_finetune(uint64_t seed, AblationMode mode, double fraction = 1.0);

  // Study drivers; each also writes <name>.csv and <name>.json when
  // persisting.
  std::vector<std::pair<std::string, DonorSet*>> run_pretrain();
  AblationReport run_ablation();
  DataFractionReport run_data_fraction(const std::vector<double>& fractions);
  RegularizationReport run_regularization();

  std::string out_dir() const { return cfg_.out_dir; }

 private:
  std::string cell_label(const AblationMode& mode, double fraction) const;

  ExperimentConfig cfg_;
  bool persist_;
  bool data_ready_ = false;
  PreparedData data_;
  std::map<std::pair<uint64_t, int>, DonorSet> donor_cache_;
  std::map<std::string, CellResult> cell_cache_;
};

// Rebuilds a seq2seq model from a checkpoint's named tensors (layer counts
// and dims are inferred from names and shapes).
Seq2Seq seq2seq_from_checkpoint(const Checkpoint& ckpt);

// BLEU of beam-decoded hypotheses against reference token lines.
double bleu_of_model(const Seq2Seq& model, const Corpus& src, const std::vector<std::string>& ref_lines,
                     const Vocab& tgt_vocab, int beam, int64_t limit = 0);

}  // namespace s2sp
