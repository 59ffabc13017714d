// SPDX-License-Identifier: Apache-2.0
//
// phredgan: persona-conditioned adversarial dialogue model, desk scale.
// Subcommands: synth, train, noise-search, eval, generate, chat.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "phredgan/pipeline.hpp"

using namespace phredgan;

namespace {

// Every command accepts the full flag set; keys stay flat in config files
// because only the top-level copies are configurable.
void register_options(CLI::App* a, RunConfig& cfg, bool configurable) {
  auto opt = [&](const char* name, auto& field, const char* help) {
    return a->add_option(name, field, help)->capture_default_str()->configurable(configurable);
  };
  opt("--vocab-size", cfg.vocab_size, "vocabulary cap including PAD/UNK/EOS");
  opt("--embed", cfg.embed, "word embedding size");
  opt("--attr-embed", cfg.attr_embed, "attribute embedding size");
  opt("--hidden", cfg.hidden, "GRU hidden size");
  opt("--layers", cfg.layers, "GRU layers per stack");
  opt("--attn", cfg.attn, "attention projection size");
  opt("--noise-dim", cfg.noise_dim, "noise input width (0: hidden size)");
  opt("--noise-mode", cfg.noise_mode, "utterance or word level noise injection")
      ->check(CLI::IsMember({"utterance", "word"}));
  opt("--softmax-samples", cfg.softmax_samples, "negatives for the sampled softmax");
  opt("--sampled-softmax-at", cfg.sampled_softmax_at,
      "vocabulary size at which training switches to sampled softmax");

  opt("--lambda-g", cfg.lambda_g, "adversarial loss weight (0: MLE-only ablation)");
  opt("--lambda-m", cfg.lambda_m, "MLE loss weight");
  opt("--acc-d-th", cfg.acc_d_th, "discriminator update accuracy ceiling");
  opt("--acc-g-th", cfg.acc_g_th, "accuracy floor enabling the adversarial term");
  opt("--lr", cfg.lr, "SGD learning rate");
  opt("--clip", cfg.clip, "global gradient norm cap");
  opt("--alpha", cfg.alpha, "noise variance")->check(CLI::PositiveNumber);
  opt("--epochs", cfg.epochs, "training epochs");
  opt("--batch", cfg.batch, "dialogues per step");
  opt("--checkpoint-every", cfg.checkpoint_every, "epochs between extra checkpoints");

  opt("--samples", cfg.samples, "noise samples (candidates) per context")
      ->check(CLI::PositiveNumber);
  opt("--max-len", cfg.max_len, "decode cap (0: twice the longest training response)");
  opt("--topk", cfg.topk, "candidates shown per chat turn");

  opt("--personas", cfg.personas, "synthetic personas")->check(CLI::Range(2, 64));
  opt("--dialogues", cfg.dialogues, "synthetic dialogue count")->check(CLI::PositiveNumber);
  opt("--turns", cfg.turns, "turns per synthetic dialogue")->check(CLI::Range(2, 64));

  opt("--data", cfg.data_dir, "corpus directory (corpus.train/.dev/.test)");
  opt("--out", cfg.out_dir, "output directory");
  a->add_option("--checkpoint", cfg.checkpoint, "checkpoint path (default <out>/model.pgck)")
      ->configurable(configurable);
  a->add_option("--resume", cfg.resume, "resume training from this checkpoint")
      ->configurable(configurable);
  opt("--split", cfg.split, "corpus split for eval/generate")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  opt("--grid-min", cfg.grid_min, "noise search grid lower bound");
  opt("--grid-max", cfg.grid_max, "noise search grid upper bound");
  opt("--seed", cfg.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  std::string save_config_path;

  CLI::App app{"persona-conditioned adversarial dialogue model"};
  app.set_config("--config", "", "flat key=value config file; flags override it")
      ->envname("PHREDGAN_CONFIG");
  app.allow_config_extras(false);
  app.add_option("--save-config", save_config_path, "write the resolved configuration and exit")
      ->configurable(false);
  register_options(&app, cfg, /*configurable=*/true);

  app.require_subcommand(0, 1);
  auto* synth = app.add_subcommand("synth", "write a synthetic persona corpus");
  auto* train = app.add_subcommand("train", "train on a corpus");
  auto* search = app.add_subcommand("noise-search", "linear search for the noise variance");
  auto* eval = app.add_subcommand("eval", "evaluate perplexity, BLEU, ROUGE, distinct n-grams");
  auto* generate = app.add_subcommand("generate", "rank candidates for every context of a split");
  auto* chat = app.add_subcommand("chat", "interactive REPL over a trained model");
  for (auto* sub : {synth, train, search, eval, generate, chat})
    register_options(sub, cfg, /*configurable=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (!save_config_path.empty()) {
      std::ofstream f(save_config_path);
      if (!f) throw std::runtime_error("cannot write " + save_config_path);
      f << app.config_to_str(true, false);
      std::cout << "config written to " << save_config_path << "\n";
      if (app.get_subcommands().empty()) return 0;
    }
    if (synth->parsed()) {
      auto r = cmd_synth(cfg);
      std::cout << "synthetic corpus in " << r.dir << ": " << r.train_count << " train / "
                << r.dev_count << " dev / " << r.test_count << " test dialogues\n";
    } else if (train->parsed()) {
      auto r = cmd_train(cfg);
      std::cout << "trained " << r.steps << " steps; final mle " << r.final_mle << "\n"
                << "checkpoint: " << r.checkpoint_path << "\nlog: " << r.log_path << "\n";
    } else if (search->parsed()) {
      auto r = cmd_noise_search(cfg);
      std::cout << "alpha search over [" << cfg.grid_min << ", " << cfg.grid_max << "]\n";
      for (std::size_t i = 0; i < r.result.grid.size(); ++i)
        std::cout << "  alpha " << r.result.grid[i] << ": " << r.result.scores[i] << "\n";
      std::cout << "best alpha: " << r.result.best_alpha << "\n";
      if (r.ties.size() > 1) {
        std::cout << "ties at minimum:";
        for (int a : r.ties) std::cout << " " << a;
        std::cout << " (smallest wins)\n";
      }
      std::cout << "report: " << r.report_path << "\n";
    } else if (eval->parsed()) {
      auto r = cmd_eval(cfg);
      std::cout << r.report.to_table() << "contexts: " << r.contexts << "\nreport: " << r.json_path
                << "\n";
    } else if (generate->parsed()) {
      auto r = cmd_generate(cfg);
      std::cout << "wrote " << r.contexts << " contexts x " << r.candidates_per_context
                << " candidates to " << r.jsonl_path << "\n";
    } else if (chat->parsed()) {
      cmd_chat(cfg, std::cin, std::cout);
    } else if (save_config_path.empty()) {
      std::cout << app.help();
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
