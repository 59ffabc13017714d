// SPDX-License-Identifier: Apache-2.0
//
// End-to-end command pipelines shared by the CLI and the Python module:
// corpus synthesis, training with checkpoints and TSV logs, the noise
// variance search, metric evaluation, and batch candidate generation.

#pragma once

#include <iosfwd>
#include <string>

#include "phredgan/data.hpp"
#include "phredgan/inference.hpp"
#include "phredgan/metrics.hpp"
#include "phredgan/training.hpp"

namespace phredgan {

// Every knob of every command, flat. The CLI maps key=value config files
// and flags onto this one struct; flags win.
struct RunConfig {
  // model
  int vocab_size = 128;
  int embed = 32;
  int attr_embed = 32;
  int hidden = 32;
  int layers = 2;
  int attn = 32;
  int noise_dim = 0;  // 0: hidden size
  std::string noise_mode = "utterance";
  int softmax_samples = 512;
  int sampled_softmax_at = 2048;
  // training
  double lambda_g = 1.0;
  double lambda_m = 1.0;
  double acc_d_th = 0.99;
  double acc_g_th = 0.75;
  double lr = 0.5;
  double clip = 5.0;
  double alpha = 1.0;  // noise variance: training draw / inference draw
  int epochs = 50;
  int batch = 16;
  int checkpoint_every = 0;
  // inference
  int samples = 64;
  int max_len = 0;
  int topk = 1;
  // synthesis
  int personas = 2;
  int dialogues = 200;
  int turns = 4;
  // io
  std::string data_dir = "data";
  std::string out_dir = "out";
  std::string checkpoint;  // empty: <out_dir>/model.pgck
  std::string resume;
  std::string split = "test";
  int grid_min = 1;
  int grid_max = 30;
  std::uint64_t seed = 1;
};

std::string default_checkpoint(const RunConfig& cfg);

struct ModelBundle {
  PhredModel model;
  Vocab vocab;
  AttributeVocab attrs;
  CheckpointMeta meta;
};

// loads checkpoint plus the vocab/attribute files beside it and verifies
// the stored hashes
ModelBundle load_bundle(const std::string& checkpoint_path);

struct SynthResult {
  std::string dir;
  int train_count = 0, dev_count = 0, test_count = 0;
};
SynthResult cmd_synth(const RunConfig& cfg);

struct TrainOutcome {
  std::string checkpoint_path;
  std::string log_path;
  double final_mle = 0.0;
  long long steps = 0;
};
TrainOutcome cmd_train(const RunConfig& cfg);

struct NoiseSearchOutcome {
  AlphaSearchResult result;
  std::vector<int> ties;
  std::string report_path;
};
NoiseSearchOutcome cmd_noise_search(const RunConfig& cfg);

struct EvalOutcome {
  MetricsReport report;
  std::string json_path;
  int contexts = 0;
};
EvalOutcome cmd_eval(const RunConfig& cfg);

struct GenerateOutcome {
  std::string jsonl_path;
  int contexts = 0;
  int candidates_per_context = 0;
};
GenerateOutcome cmd_generate(const RunConfig& cfg);

void cmd_chat(const RunConfig& cfg, std::istream& in, std::ostream& out);

}  // namespace phredgan
