// Python bindings for the main operations: BPE, metrics, data generation,
// donor pretraining, fine-tuning, the two studies and beam-search decoding.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "s2sp/harness.hpp"

namespace py = pybind11;
using namespace s2sp;
using nlohmann::json;

namespace {

ExperimentConfig config_from_json_arg(const std::string& config_json) {
  return config_json.empty() ? ExperimentConfig{} : ExperimentConfig::from_json_string(config_json);
}

py::dict cell_to_dict(const CellResult& cell) {
  py::dict d;
  d["seed"] = cell.seed;
  d["mode"] = cell.mode_name;
  d["lm_objective"] = cell.lm_objective;
  d["donor_corpus"] = cell.donor_corpus;
  d["fraction"] = cell.fraction;
  d["valid_bleu"] = cell.valid_bleu;
  d["best_valid_ppl"] = cell.best_valid_ppl;
  d["best_step"] = cell.best_step;
  d["final_train_ppl"] = cell.final_train_ppl;
  d["final_valid_ppl"] = cell.final_valid_ppl;
  d["mono_tgt_ppl_init"] = cell.mono_tgt_ppl_init;
  d["mono_tgt_ppl_final"] = cell.mono_tgt_ppl_final;
  d["checkpoint_hash"] = hex64(cell.checkpoint_hash);
  d["transferred"] = cell.transfer.transferred_names();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "seq2seq pretraining lab core";
  m.attr("__version__") = version_string();

  py::register_exception<Error>(m, "S2spError");

  // --- BPE -----------------------------------------------------------------
  m.def(
      "learn_bpe",
      [](const std::map<std::string, int64_t>& freqs, int merges) {
        return learn_bpe(WordFreqs(freqs.begin(), freqs.end()), merges).merges;
      },
      py::arg("word_freqs"), py::arg("num_merges"),
      "Greedy BPE merges over a word-frequency map, lexicographic tie-break.");
  m.def(
      "apply_bpe",
      [](const std::vector<MergePair>& merges, const std::string& word) {
        return apply_bpe(MergeTable{merges}, word);
      },
      py::arg("merges"), py::arg("word"));

  py::class_<Vocab>(m, "Vocab")
      .def_static("build",
                  [](const std::vector<MergePair>& merges, const std::map<std::string, int64_t>& freqs) {
                    return Vocab::build(MergeTable{merges}, WordFreqs(freqs.begin(), freqs.end()));
                  })
      .def("size", &Vocab::size)
      .def("id_of", &Vocab::id_of)
      .def("token_of", &Vocab::token_of)
      .def_readonly("tokens", &Vocab::tokens);

  py::class_<MergeTable>(m, "MergeTable").def_readonly("merges", &MergeTable::merges);

  m.def(
      "encode",
      [](const Vocab& vocab, const std::vector<MergePair>& merges, const std::string& sentence) {
        return encode(vocab, MergeTable{merges}, sentence);
      },
      py::arg("vocab"), py::arg("merges"), py::arg("sentence"),
      "Whitespace-split, BPE-split and map to ids wrapped in BOS/EOS.");
  m.def(
      "decode",
      [](const Vocab& vocab, const std::vector<int32_t>& ids) { return decode(vocab, ids); },
      py::arg("vocab"), py::arg("ids"));

  // --- metrics ---------------------------------------------------------------
  m.def("bleu_corpus", &bleu_corpus, py::arg("hyps"), py::arg("refs"),
        "Corpus BLEU in [0, 100], multi-bleu semantics, single reference.");
  m.def(
      "rouge_n",
      [](const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, int n) {
        auto s = rouge_n(hyps, refs, n);
        return py::make_tuple(s.precision, s.recall, s.f1);
      },
      py::arg("hyps"), py::arg("refs"), py::arg("n"));
  m.def(
      "rouge_l",
      [](const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
        auto s = rouge_l(hyps, refs);
        return py::make_tuple(s.precision, s.recall, s.f1);
      },
      py::arg("hyps"), py::arg("refs"));

  // --- experiment harness ----------------------------------------------------
  m.def("default_config", [] { return ExperimentConfig{}.to_json_string(); },
        "Desk-scale default config as a JSON string.");
  m.def(
      "gen_data",
      [](const std::string& config_json) {
        auto cfg = config_from_json_arg(config_json);
        auto data = prepare_data(cfg);
        const std::string dir = cfg.out_dir + "/data";
        write_data_dir(cfg, data, dir);
        py::dict d;
        d["data_dir"] = dir;
        d["src_vocab"] = data.src_vocab.size();
        d["tgt_vocab"] = data.tgt_vocab.size();
        d["optimal_lm_perplexity"] = optimal_lm_perplexity(data.task);
        return d;
      },
      py::arg("config_json") = "");
  m.def(
      "pretrain",
      [](const std::string& config_json) {
        Lab lab(config_from_json_arg(config_json));
        py::list out;
        for (auto& [tag, set] : lab.run_pretrain()) {
          py::dict d;
          d["seed"] = tag;
          d["src_valid_ppl"] = set->src_ppl;
          d["tgt_valid_ppl"] = set->tgt_ppl;
          out.append(d);
        }
        return out;
      },
      py::arg("config_json") = "");
  m.def(
      "finetune",
      [](const std::string& config_json) {
        auto cfg = config_from_json_arg(config_json);
        Lab lab(cfg);
        py::list out;
        for (uint64_t seed : cfg.seeds) out.append(cell_to_dict(lab.run_finetune(seed, cfg.mode, 1.0)));
        return out;
      },
      py::arg("config_json") = "");
  m.def(
      "ablate",
      [](const std::string& config_json) {
        Lab lab(config_from_json_arg(config_json));
        auto report = lab.run_ablation();
        py::list out;
        for (const auto& row : report.rows) {
          py::dict d;
          d["label"] = row.label;
          d["median_bleu"] = row.median_bleu;
          d["delta_vs_full"] = row.delta_vs_full;
          if (row.has_reference) d["full_scale_reference_delta"] = row.full_scale_reference_delta;
          out.append(d);
        }
        return out;
      },
      py::arg("config_json") = "");
  m.def(
      "data_fraction",
      [](const std::string& config_json, const std::vector<double>& fractions) {
        Lab lab(config_from_json_arg(config_json));
        auto report = lab.run_data_fraction(fractions);
        py::list out;
        for (const auto& row : report.rows) {
          py::dict d;
          d["fraction"] = row.fraction;
          d["pretrained_median_bleu"] = row.pretrained_median_bleu;
          d["none_median_bleu"] = row.none_median_bleu;
          d["gap"] = row.gap;
          out.append(d);
        }
        return out;
      },
      py::arg("config_json"), py::arg("fractions"));

  // --- decoding ----------------------------------------------------------------
  m.def(
      "translate",
      [](const std::string& checkpoint, const std::string& src_merges, const std::string& src_vocab,
         const std::string& tgt_vocab, const std::vector<std::string>& sentences, int beam,
         bool length_norm) {
        auto model = seq2seq_from_checkpoint(load_checkpoint(checkpoint));
        auto merges = load_merges(src_merges);
        auto sv = load_vocab(src_vocab);
        auto tv = load_vocab(tgt_vocab);
        std::vector<std::string> out;
        out.reserve(sentences.size());
        for (const auto& s : sentences) {
          auto ids = encode(sv, merges, s);
          auto result = beam_search(model, ids, beam, default_max_len(ids), length_norm);
          out.push_back(decode(tv, result.best.tokens));
        }
        return out;
      },
      py::arg("checkpoint"), py::arg("src_merges"), py::arg("src_vocab"), py::arg("tgt_vocab"),
      py::arg("sentences"), py::arg("beam") = 10, py::arg("length_norm") = false);
  m.def(
      "checkpoint_tensors",
      [](const std::string& path) {
        auto ckpt = load_checkpoint(path);
        py::dict d;
        for (const auto& [name, t] : ckpt.tensors) d[py::str(name)] = t->shape;
        return d;
      },
      py::arg("path"), "Names and shapes stored in a checkpoint.");
}
