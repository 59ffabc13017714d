// SPDX-License-Identifier: Apache-2.0
//
// Python bindings over the pipeline layer plus direct metric functions.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "phredgan/pipeline.hpp"

namespace py = pybind11;
using namespace phredgan;

namespace {

RunConfig config_from_kwargs(const py::kwargs& kwargs) {
  RunConfig cfg;
  for (auto item : kwargs) {
    std::string key = py::cast<std::string>(item.first);
    auto value = item.second;
    if (key == "vocab_size") cfg.vocab_size = py::cast<int>(value);
    else if (key == "embed") cfg.embed = py::cast<int>(value);
    else if (key == "attr_embed") cfg.attr_embed = py::cast<int>(value);
    else if (key == "hidden") cfg.hidden = py::cast<int>(value);
    else if (key == "layers") cfg.layers = py::cast<int>(value);
    else if (key == "attn") cfg.attn = py::cast<int>(value);
    else if (key == "noise_dim") cfg.noise_dim = py::cast<int>(value);
    else if (key == "noise_mode") cfg.noise_mode = py::cast<std::string>(value);
    else if (key == "softmax_samples") cfg.softmax_samples = py::cast<int>(value);
    else if (key == "sampled_softmax_at") cfg.sampled_softmax_at = py::cast<int>(value);
    else if (key == "lambda_g") cfg.lambda_g = py::cast<double>(value);
    else if (key == "lambda_m") cfg.lambda_m = py::cast<double>(value);
    else if (key == "acc_d_th") cfg.acc_d_th = py::cast<double>(value);
    else if (key == "acc_g_th") cfg.acc_g_th = py::cast<double>(value);
    else if (key == "lr") cfg.lr = py::cast<double>(value);
    else if (key == "clip") cfg.clip = py::cast<double>(value);
    else if (key == "alpha") cfg.alpha = py::cast<double>(value);
    else if (key == "epochs") cfg.epochs = py::cast<int>(value);
    else if (key == "batch") cfg.batch = py::cast<int>(value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = py::cast<int>(value);
    else if (key == "samples") cfg.samples = py::cast<int>(value);
    else if (key == "max_len") cfg.max_len = py::cast<int>(value);
    else if (key == "personas") cfg.personas = py::cast<int>(value);
    else if (key == "dialogues") cfg.dialogues = py::cast<int>(value);
    else if (key == "turns") cfg.turns = py::cast<int>(value);
    else if (key == "data_dir") cfg.data_dir = py::cast<std::string>(value);
    else if (key == "out_dir") cfg.out_dir = py::cast<std::string>(value);
    else if (key == "checkpoint") cfg.checkpoint = py::cast<std::string>(value);
    else if (key == "resume") cfg.resume = py::cast<std::string>(value);
    else if (key == "split") cfg.split = py::cast<std::string>(value);
    else if (key == "grid_min") cfg.grid_min = py::cast<int>(value);
    else if (key == "grid_max") cfg.grid_max = py::cast<int>(value);
    else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
  return cfg;
}

py::dict metrics_dict(const MetricsReport& r) {
  py::dict d;
  d["perplexity"] = r.perplexity;
  d["bleu4"] = r.bleu4;
  d["rouge2_f1"] = r.rouge2_f1;
  d["distinct1"] = r.distinct1;
  d["distinct2"] = r.distinct2;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "persona-conditioned adversarial dialogue model";

  m.def(
      "synth",
      [](const py::kwargs& kwargs) {
        auto r = cmd_synth(config_from_kwargs(kwargs));
        py::dict d;
        d["dir"] = r.dir;
        d["train"] = r.train_count;
        d["dev"] = r.dev_count;
        d["test"] = r.test_count;
        return d;
      },
      "write a synthetic persona corpus (kwargs mirror the CLI flags)");

  m.def(
      "train",
      [](const py::kwargs& kwargs) {
        auto r = cmd_train(config_from_kwargs(kwargs));
        py::dict d;
        d["checkpoint"] = r.checkpoint_path;
        d["log"] = r.log_path;
        d["final_mle"] = r.final_mle;
        d["steps"] = r.steps;
        return d;
      },
      "train a model on a corpus directory");

  m.def(
      "evaluate",
      [](const py::kwargs& kwargs) {
        auto r = cmd_eval(config_from_kwargs(kwargs));
        py::dict d = metrics_dict(r.report);
        d["contexts"] = r.contexts;
        d["report"] = r.json_path;
        return d;
      },
      "evaluate a trained model on a corpus split");

  m.def(
      "noise_search",
      [](const py::kwargs& kwargs) {
        auto r = cmd_noise_search(config_from_kwargs(kwargs));
        py::dict d;
        d["best_alpha"] = r.result.best_alpha;
        d["grid"] = r.result.grid;
        d["scores"] = r.result.scores;
        d["ties"] = r.ties;
        return d;
      },
      "linear search for the noise variance on the dev split");

  m.def(
      "generate",
      [](const py::kwargs& kwargs) {
        auto r = cmd_generate(config_from_kwargs(kwargs));
        py::dict d;
        d["path"] = r.jsonl_path;
        d["contexts"] = r.contexts;
        d["samples"] = r.candidates_per_context;
        return d;
      },
      "write ranked candidates for every context of a split");

  m.def(
      "generate_replies",
      [](const std::string& checkpoint, const std::vector<std::pair<std::string, std::string>>& context,
         const std::string& responder, int samples, double alpha, std::uint64_t seed) {
        ModelBundle bundle = load_bundle(checkpoint);
        std::vector<Turn> turns;
        for (const auto& [speaker, text] : context) {
          Turn t;
          t.tokens = bundle.vocab.encode(tokenize(text));
          t.tokens.push_back(Vocab::kEos);
          t.attribute = bundle.attrs.id_of(speaker);
          turns.push_back(std::move(t));
        }
        InferenceConfig cfg;
        cfg.samples = samples;
        cfg.alpha = alpha;
        cfg.seed = seed;
        auto cands = generate_ranked(bundle.model, turns, bundle.attrs.id_of(responder), cfg);
        py::list out;
        for (const auto& c : cands) {
          py::dict d;
          d["text"] = join_tokens(bundle.vocab.decode(c.tokens));
          d["rank_score"] = c.rank_score;
          d["word_probs"] = c.word_probs;
          out.append(d);
        }
        return out;
      },
      py::arg("checkpoint"), py::arg("context"), py::arg("responder"), py::arg("samples") = 64,
      py::arg("alpha") = 1.0, py::arg("seed") = 1,
      "rank replies for a context of (speaker, text) pairs");

  m.def("tokenize", &tokenize, py::arg("text"), "lowercase, punctuation-splitting tokenizer");
  m.def(
      "bleu4",
      [](const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
        return bleu4(hyps, refs, nullptr);
      },
      py::arg("hypotheses"), py::arg("references"), "corpus-level smoothed BLEU-4");
  m.def("rouge2_f1", &rouge2_f1, py::arg("hypotheses"), py::arg("references"),
        "macro-averaged bigram F1");
  m.def(
      "distinct_n",
      [](const std::vector<TokenSeq>& hyps, int n) { return distinct_n(hyps, n, nullptr, nullptr); },
      py::arg("hypotheses"), py::arg("n"), "unique over total n-grams");
  m.def(
      "classify_persona",
      [](const std::vector<std::string>& tokens, const std::vector<std::vector<std::string>>& style) {
        SynthRules rules;
        rules.style_tokens = style;
        return classify_persona(tokens, rules);
      },
      py::arg("tokens"), py::arg("style_tokens"),
      "rule-based persona label over disjoint style token sets (-1: undecided)");
}
