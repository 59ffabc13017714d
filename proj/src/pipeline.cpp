// SPDX-License-Identifier: Apache-2.0

#include "phredgan/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>

#include <json.hpp>

namespace phredgan {

namespace fs = std::filesystem;
using nlohmann::json;

std::string default_checkpoint(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? cfg.out_dir + "/model.pgck" : cfg.checkpoint;
}

namespace {

ModelConfig model_config_from(const RunConfig& cfg, int vocab_size, int attr_count,
                              int max_response_len) {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.attr_count = attr_count;
  mc.embed_size = cfg.embed;
  mc.attr_embed_size = cfg.attr_embed;
  mc.hidden_size = cfg.hidden;
  mc.num_layers = cfg.layers;
  mc.attn_size = cfg.attn;
  mc.noise_mode = noise_mode_from(cfg.noise_mode);
  mc.noise_dim = cfg.noise_dim;
  mc.softmax_samples = cfg.softmax_samples;
  mc.sampled_softmax_at = cfg.sampled_softmax_at;
  mc.max_response_len = max_response_len;
  return mc;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig tc;
  tc.lambda_g = cfg.lambda_g;
  tc.lambda_m = cfg.lambda_m;
  tc.acc_d_th = cfg.acc_d_th;
  tc.acc_g_th = cfg.acc_g_th;
  tc.learning_rate = cfg.lr;
  tc.clip_norm = cfg.clip;
  tc.noise_alpha = cfg.alpha;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch;
  tc.checkpoint_every = cfg.checkpoint_every;
  tc.seed = cfg.seed;
  return tc;
}

InferenceConfig inference_config_from(const RunConfig& cfg) {
  InferenceConfig ic;
  ic.alpha = cfg.alpha;
  ic.samples = cfg.samples;
  ic.max_len = cfg.max_len;
  ic.seed = cfg.seed;
  return ic;
}

std::string split_path(const RunConfig& cfg, const std::string& split) {
  return cfg.data_dir + "/corpus." + split;
}

std::vector<RawDialogue> load_split(const RunConfig& cfg, const std::string& split) {
  return load_corpus_jsonl(split_path(cfg, split));
}

}  // namespace

ModelBundle load_bundle(const std::string& checkpoint_path) {
  auto loaded = load_checkpoint(checkpoint_path);
  fs::path dir = fs::path(checkpoint_path).parent_path();
  Vocab vocab = Vocab::load((dir / "vocab.txt").string());
  AttributeVocab attrs = AttributeVocab::load((dir / "attrs.txt").string());
  if (vocab.hash() != loaded.meta.vocab_hash)
    throw std::runtime_error("bundle: vocab.txt does not match the checkpoint's vocabulary");
  if (attrs.hash() != loaded.meta.attr_hash)
    throw std::runtime_error("bundle: attrs.txt does not match the checkpoint's attributes");
  return {std::move(loaded.model), std::move(vocab), std::move(attrs), loaded.meta};
}

SynthResult cmd_synth(const RunConfig& cfg) {
  SynthSpec spec;
  spec.personas = cfg.personas;
  spec.vocab_size = cfg.vocab_size;
  spec.dialogues = cfg.dialogues;
  spec.turns = cfg.turns;
  spec.seed = cfg.seed;
  SynthCorpus corpus = generate_synthetic(spec);
  write_synthetic(corpus, cfg.out_dir);
  return {cfg.out_dir, static_cast<int>(corpus.train.size()), static_cast<int>(corpus.dev.size()),
          static_cast<int>(corpus.test.size())};
}

TrainOutcome cmd_train(const RunConfig& cfg) {
  auto raw_train = load_split(cfg, "train");
  if (raw_train.empty()) throw std::runtime_error("train: empty training corpus");

  fs::create_directories(cfg.out_dir);
  Vocab vocab = build_vocab(raw_train, cfg.vocab_size);
  AttributeVocab attrs = build_attribute_vocab(raw_train);
  auto corpus = encode_corpus(raw_train, vocab, attrs);

  int max_resp = 1;
  for (const auto& d : corpus)
    for (std::size_t i = 1; i < d.turns.size(); ++i)
      max_resp = std::max(max_resp, static_cast<int>(d.turns[i].tokens.size()));

  TrainConfig tc = train_config_from(cfg);
  std::unique_ptr<PhredModel> model;
  int start_epoch = 0;
  long long start_step = 0;
  if (!cfg.resume.empty()) {
    auto loaded = load_checkpoint(cfg.resume);
    if (loaded.meta.vocab_hash != vocab.hash())
      throw std::runtime_error("train: resume checkpoint was built on a different vocabulary");
    model = std::make_unique<PhredModel>(std::move(loaded.model));
    start_epoch = loaded.meta.epoch;
    start_step = loaded.meta.global_step;
  } else {
    model = std::make_unique<PhredModel>(
        model_config_from(cfg, vocab.size(), attrs.size(), max_resp), cfg.seed);
  }

  vocab.save(cfg.out_dir + "/vocab.txt");
  attrs.save(cfg.out_dir + "/attrs.txt");

  std::string log_path = cfg.out_dir + "/train_log.tsv";
  std::ofstream log;
  if (cfg.resume.empty()) {
    log.open(log_path);
    log << step_report_header() << '\n';
  } else {
    log.open(log_path, std::ios::app);
  }
  if (!log) throw std::runtime_error("train: cannot write " + log_path);

  Trainer trainer(*model, tc);
  trainer.start_epoch = start_epoch;
  trainer.global_step = start_step;

  double last_mle = 0.0;
  trainer.set_report_sink([&](const StepReport& r) {
    log << to_tsv(r) << '\n';
    last_mle = r.mle;
  });

  std::string ckpt_path = default_checkpoint(cfg);
  CheckpointMeta meta;
  meta.vocab_hash = vocab.hash();
  meta.attr_hash = attrs.hash();
  meta.train_alpha = cfg.alpha;
  trainer.set_epoch_hook([&](const PhredModel& m, int epoch, long long step) {
    meta.epoch = epoch;
    meta.global_step = step;
    save_checkpoint(m, meta, ckpt_path);
    if (cfg.checkpoint_every > 0 && epoch < tc.epochs)
      save_checkpoint(m, meta, cfg.out_dir + "/ckpt_epoch" + std::to_string(epoch) + ".pgck");
  });

  trainer.train(corpus);
  log.close();
  return {ckpt_path, log_path, last_mle, trainer.global_step};
}

NoiseSearchOutcome cmd_noise_search(const RunConfig& cfg) {
  ModelBundle bundle = load_bundle(default_checkpoint(cfg));
  auto raw = load_split(cfg, "dev");
  auto dev = encode_corpus(raw, bundle.vocab, bundle.attrs);
  if (cfg.grid_min < 1 || cfg.grid_max < cfg.grid_min)
    throw std::runtime_error("noise-search: invalid grid bounds");
  std::vector<int> grid;
  for (int a = cfg.grid_min; a <= cfg.grid_max; ++a) grid.push_back(a);

  auto res = search_noise_variance(bundle.model, dev, inference_config_from(cfg), grid);

  NoiseSearchOutcome out;
  out.result = res;
  double best = res.scores[0];
  for (double s : res.scores) best = std::min(best, s);
  for (std::size_t i = 0; i < res.grid.size(); ++i)
    if (res.scores[i] == best) out.ties.push_back(res.grid[i]);

  fs::create_directories(cfg.out_dir);
  out.report_path = cfg.out_dir + "/alpha_search.json";
  json j;
  j["grid"] = res.grid;
  j["scores"] = res.scores;
  j["best_alpha"] = res.best_alpha;
  j["ties"] = out.ties;
  std::ofstream f(out.report_path);
  if (!f) throw std::runtime_error("noise-search: cannot write " + out.report_path);
  f << j.dump(2) << '\n';
  return out;
}

EvalOutcome cmd_eval(const RunConfig& cfg) {
  ModelBundle bundle = load_bundle(default_checkpoint(cfg));
  auto raw = load_split(cfg, cfg.split);
  if (raw.empty()) throw std::runtime_error("eval: empty " + cfg.split + " set");
  auto eval_set = encode_corpus(raw, bundle.vocab, bundle.attrs);

  InferenceConfig ic = inference_config_from(cfg);
  auto contexts = enumerate_contexts(eval_set);
  std::vector<TokenSeq> hypotheses, references;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const auto& ctx = contexts[c];
    std::span<const Turn> prefix(ctx.dialogue->turns.data(), ctx.next_turn);
    const Turn& truth = ctx.dialogue->turns[ctx.next_turn];
    InferenceConfig per = ic;
    per.seed = Rng::derive(cfg.seed, 0xe7a1, c);
    auto cands = generate_ranked(bundle.model, prefix, truth.attribute, per);
    hypotheses.push_back(bundle.vocab.decode(cands.front().tokens));
    references.push_back(bundle.vocab.decode(truth.tokens));
  }

  EvalOutcome out;
  out.contexts = static_cast<int>(contexts.size());
  out.report = evaluate_model(bundle.model, eval_set, hypotheses, references, cfg.seed);
  fs::create_directories(cfg.out_dir);
  out.json_path = cfg.out_dir + "/report.json";
  std::ofstream f(out.json_path);
  if (!f) throw std::runtime_error("eval: cannot write " + out.json_path);
  f << out.report.to_json() << '\n';
  return out;
}

GenerateOutcome cmd_generate(const RunConfig& cfg) {
  ModelBundle bundle = load_bundle(default_checkpoint(cfg));
  auto raw = load_split(cfg, cfg.split);
  if (raw.empty()) throw std::runtime_error("generate: empty " + cfg.split + " set");
  auto eval_set = encode_corpus(raw, bundle.vocab, bundle.attrs);

  InferenceConfig ic = inference_config_from(cfg);
  auto contexts = enumerate_contexts(eval_set);

  fs::create_directories(cfg.out_dir);
  GenerateOutcome out;
  out.jsonl_path = cfg.out_dir + "/candidates.jsonl";
  out.contexts = static_cast<int>(contexts.size());
  out.candidates_per_context = cfg.samples;
  std::ofstream f(out.jsonl_path);
  if (!f) throw std::runtime_error("generate: cannot write " + out.jsonl_path);

  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const auto& ctx = contexts[c];
    std::span<const Turn> prefix(ctx.dialogue->turns.data(), ctx.next_turn);
    int responder = ctx.dialogue->turns[ctx.next_turn].attribute;
    InferenceConfig per = ic;
    per.seed = Rng::derive(cfg.seed, 0x9e4e, c);
    auto cands = generate_ranked(bundle.model, prefix, responder, per);
    for (std::size_t rank = 0; rank < cands.size(); ++rank) {
      json line;
      line["context_id"] = c;
      line["rank"] = rank;
      line["responder"] = bundle.attrs.name(responder);
      line["tokens"] = bundle.vocab.decode(cands[rank].tokens);
      line["rank_score"] = cands[rank].rank_score;
      line["word_probs"] = cands[rank].word_probs;
      f << line.dump() << '\n';
    }
  }
  return out;
}

void cmd_chat(const RunConfig& cfg, std::istream& in, std::ostream& out) {
  ModelBundle bundle = load_bundle(default_checkpoint(cfg));
  InferenceConfig ic = inference_config_from(cfg);
  chat_session(bundle.model, bundle.vocab, bundle.attrs, ic, in, out, cfg.topk);
}

}  // namespace phredgan
