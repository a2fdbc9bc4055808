// s2sp command line: data generation, donor pretraining, fine-tuning, the
// ablation and data-fraction studies, beam-search decoding and metrics.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>

#include "s2sp/harness.hpp"

using namespace s2sp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ExperimentConfig load_config(const std::string& path, const std::string& out_dir_override) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(path);
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  return cfg;
}

std::vector<TokenSeq> read_token_file(const std::string& path) {
  return tokenize_lines(read_lines(path));
}

int run_gen_data(const std::string& config_path, const std::string& out_dir) {
  auto cfg = load_config(config_path, out_dir);
  auto data = prepare_data(cfg);
  const std::string dir = (fs::path(cfg.out_dir) / "data").string();
  write_data_dir(cfg, data, dir);
  json j = {{"data_dir", dir},
            {"src_vocab", data.src_vocab.size()},
            {"tgt_vocab", data.tgt_vocab.size()},
            {"optimal_lm_perplexity", optimal_lm_perplexity(data.task)},
            {"config_hash", hex64(cfg.config_hash())}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_pretrain_cmd(const std::string& config_path, const std::string& out_dir) {
  auto cfg = load_config(config_path, out_dir);
  Lab lab(cfg);
  json j = json::array();
  for (auto& [tag, set] : lab.run_pretrain())
    j.push_back({{"seed", tag}, {"src_valid_ppl", set->src_ppl}, {"tgt_valid_ppl", set->tgt_ppl}});
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_finetune_cmd(const std::string& config_path, const std::string& out_dir) {
  auto cfg = load_config(config_path, out_dir);
  Lab lab(cfg);
  json j = json::array();
  std::vector<double> bleus;
  for (uint64_t seed : cfg.seeds) {
    auto cell = lab.run_finetune(seed, cfg.mode, 1.0);
    bleus.push_back(cell.valid_bleu);
    j.push_back({{"seed", seed},
                 {"valid_bleu", cell.valid_bleu},
                 {"best_valid_ppl", cell.best_valid_ppl},
                 {"best_step", cell.best_step},
                 {"checkpoint_hash", hex64(cell.checkpoint_hash)}});
  }
  json out = {{"cells", j}, {"median_valid_bleu", median(bleus)},
              {"config_hash", hex64(cfg.config_hash())}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_ablate_cmd(const std::string& config_path, const std::string& out_dir) {
  auto cfg = load_config(config_path, out_dir);
  Lab lab(cfg);
  auto report = lab.run_ablation();
  json j = json::array();
  for (const auto& row : report.rows)
    j.push_back({{"label", row.label},
                 {"median_bleu", row.median_bleu},
                 {"delta_vs_full", row.delta_vs_full}});
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_fraction_cmd(const std::string& config_path, const std::string& out_dir,
                     std::vector<double> fractions) {
  auto cfg = load_config(config_path, out_dir);
  if (fractions.empty()) fractions = {0.2, 0.5, 1.0};
  Lab lab(cfg);
  auto report = lab.run_data_fraction(fractions);
  json j = json::array();
  for (const auto& row : report.rows)
    j.push_back({{"fraction", row.fraction},
                 {"pretrained_median_bleu", row.pretrained_median_bleu},
                 {"none_median_bleu", row.none_median_bleu},
                 {"gap", row.gap}});
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct DecodeArgs {
  std::string checkpoint, run_dir, data_dir;
  std::string src_merges, src_vocab, tgt_vocab;
  std::string input, output;
  int beam = 10;
  int max_len = 0;
  bool length_norm = false;
};

int run_decode_cmd(DecodeArgs args) {
  if (!args.run_dir.empty() && args.checkpoint.empty())
    args.checkpoint = (fs::path(args.run_dir) / "checkpoint.s2sp").string();
  if (!args.data_dir.empty()) {
    if (args.src_merges.empty()) args.src_merges = (fs::path(args.data_dir) / "src.merges").string();
    if (args.src_vocab.empty()) args.src_vocab = (fs::path(args.data_dir) / "src.vocab").string();
    if (args.tgt_vocab.empty()) args.tgt_vocab = (fs::path(args.data_dir) / "tgt.vocab").string();
  }
  auto model = seq2seq_from_checkpoint(load_checkpoint(args.checkpoint));
  auto merges = load_merges(args.src_merges);
  auto src_vocab = load_vocab(args.src_vocab);
  auto tgt_vocab = load_vocab(args.tgt_vocab);

  auto lines = read_lines(args.input);
  std::vector<std::string> out_lines;
  out_lines.reserve(lines.size());
  for (const auto& line : lines) {
    auto ids = encode(src_vocab, merges, line);
    const int cap = args.max_len > 0 ? args.max_len : default_max_len(ids);
    auto result = beam_search(model, ids, args.beam, cap, args.length_norm);
    out_lines.push_back(decode(tgt_vocab, result.best.tokens));
  }
  write_lines(args.output, out_lines);
  json j = {{"sentences", out_lines.size()}, {"beam", args.beam}, {"output", args.output}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_metrics_bleu(const std::string& hyp_path, const std::string& ref_path) {
  const double bleu = bleu_corpus(read_token_file(hyp_path), read_token_file(ref_path));
  std::cout << json{{"bleu", bleu}}.dump(2) << "\n";
  return 0;
}

int run_metrics_rouge(const std::string& hyp_path, const std::string& ref_path) {
  auto hyps = read_token_file(hyp_path);
  auto refs = read_token_file(ref_path);
  auto r1 = rouge_n(hyps, refs, 1);
  auto r2 = rouge_n(hyps, refs, 2);
  auto rl = rouge_l(hyps, refs);
  json j = {{"rouge_1", r1.f1}, {"rouge_2", r2.f1}, {"rouge_l", rl.f1}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seq2seq pretraining lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  std::string config_path, out_dir;
  std::vector<double> fractions;
  DecodeArgs decode_args;
  std::string hyp_path, ref_path;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON (defaults apply when omitted)");
    cmd->add_option("--out-dir", out_dir, "override the config's output directory");
  };

  add_config(app.add_subcommand("gen-data", "generate corpora, merges and vocab files"));
  add_config(app.add_subcommand("pretrain", "train donor language models for every seed"));
  add_config(app.add_subcommand("finetune", "transfer donors and fine-tune per the config mode"));
  add_config(app.add_subcommand("ablate", "run the ablation grid"));
  auto* frac = app.add_subcommand("data-fraction", "pretraining gap vs labeled-data fraction");
  add_config(frac);
  frac->add_option("--fractions", fractions, "labeled-data fractions, e.g. 0.2 0.5 1.0");

  auto* dec = app.add_subcommand("decode", "beam-search decode a source file");
  dec->add_option("--checkpoint", decode_args.checkpoint, "model checkpoint");
  dec->add_option("--run-dir", decode_args.run_dir, "cell directory holding checkpoint.s2sp");
  dec->add_option("--data-dir", decode_args.data_dir, "data directory with merges/vocab files");
  dec->add_option("--src-merges", decode_args.src_merges, "source merge table");
  dec->add_option("--src-vocab", decode_args.src_vocab, "source vocab file");
  dec->add_option("--tgt-vocab", decode_args.tgt_vocab, "target vocab file");
  dec->add_option("--input", decode_args.input, "source sentences, one per line")->required();
  dec->add_option("--output", decode_args.output, "where to write decoded sentences")->required();
  dec->add_option("--beam", decode_args.beam, "beam width (default 10)");
  dec->add_option("--max-len", decode_args.max_len, "emitted-token cap (default 2*src+10)");
  dec->add_flag("--length-norm", decode_args.length_norm, "rank final hypotheses by score/length");

  auto* metrics = app.add_subcommand("metrics", "BLEU and ROUGE over text files");
  metrics->require_subcommand(1);
  auto* bleu_cmd = metrics->add_subcommand("bleu", "corpus BLEU");
  bleu_cmd->add_option("--hyp", hyp_path)->required();
  bleu_cmd->add_option("--ref", ref_path)->required();
  auto* rouge_cmd = metrics->add_subcommand("rouge", "ROUGE-1/2/L F1");
  rouge_cmd->add_option("--hyp", hyp_path)->required();
  rouge_cmd->add_option("--ref", ref_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("gen-data")) return run_gen_data(config_path, out_dir);
    if (app.got_subcommand("pretrain")) return run_pretrain_cmd(config_path, out_dir);
    if (app.got_subcommand("finetune")) return run_finetune_cmd(config_path, out_dir);
    if (app.got_subcommand("ablate")) return run_ablate_cmd(config_path, out_dir);
    if (app.got_subcommand("data-fraction")) return run_fraction_cmd(config_path, out_dir, fractions);
    if (app.got_subcommand("decode")) return run_decode_cmd(decode_args);
    if (app.got_subcommand("metrics")) {
      if (metrics->got_subcommand("bleu")) return run_metrics_bleu(hyp_path, ref_path);
      return run_metrics_rouge(hyp_path, ref_path);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
