// SPDX-License-Identifier: Apache-2.0
//
// The persona dialogue GAN: a shared hierarchical encoder (attention RNN,
// utterance RNN, and context RNN with attribute conditioning), a
// noise-injected decoder with additive attention over the latest
// utterance, and a bidirectional word-level discriminator. Generator and
// discriminator share the encoder and both embedding tables; the single
// parameter registry holds exactly one copy of each tensor.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phredgan/data.hpp"
#include "phredgan/layers.hpp"
#include "phredgan/rng.hpp"

namespace phredgan {

enum class NoiseMode { kUtterance, kWord };

std::string to_string(NoiseMode mode);
NoiseMode noise_mode_from(const std::string& name);

struct NoiseSpec {
  NoiseMode mode = NoiseMode::kUtterance;
  double alpha = 1.0;  // per-coordinate variance
  int dim = 32;
};

// One draw replicated across steps (utterance mode) or independent draws
// per step (word mode); each coordinate is N(0, alpha).
std::vector<Tensor> sample_noise(const NoiseSpec& spec, int steps, Rng& rng);

struct ModelConfig {
  int vocab_size = 0;
  int attr_count = 0;
  int embed_size = 32;
  int attr_embed_size = 32;
  int hidden_size = 32;
  int num_layers = 2;
  int attn_size = 32;
  NoiseMode noise_mode = NoiseMode::kUtterance;
  int noise_dim = 0;  // 0: defaults to hidden_size
  // full softmax is exact and affordable below this vocabulary size;
  // larger vocabularies fall back to the sampled estimate when training
  int sampled_softmax_at = 2048;
  int softmax_samples = 512;
  int max_response_len = 20;  // longest training response; decode cap is 2x

  void validate() const;
  int effective_noise_dim() const { return noise_dim > 0 ? noise_dim : hidden_size; }
};

enum class ParamGroup { kShared, kGenerator, kDiscriminator };

// Entries share the model's parameter storage; writes through
// `tensor.mutable_values()` update the model in place.
struct ParamEntry {
  std::string name;
  Tensor tensor;
  ParamGroup group;
};

struct EncoderState {
  Tensor context_state;     // full context RNN state (layers, hidden)
  Tensor context_output;    // its top layer (hidden), the per-turn h_i
  Tensor attention_keys;    // (T, 2*hidden) attention memory over the latest utterance
  Tensor final_state;       // concat(att fwd top, att bwd top, context top) = (3*hidden)
};

struct GeneratorResult {
  std::vector<Tensor> step_probs;   // full-softmax distribution per target position
  std::vector<Tensor> step_losses;  // -log P(target_j), full or sampled head
};

class PhredModel {
 public:
  PhredModel(ModelConfig config, std::uint64_t seed);

  PhredModel(const PhredModel&) = delete;
  PhredModel& operator=(const PhredModel&) = delete;
  PhredModel(PhredModel&&) = default;
  PhredModel& operator=(PhredModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }

  std::vector<ParamEntry> params() const;
  // shared params plus one side's own
  std::vector<ParamEntry> side_params(ParamGroup side) const;
  // replaces every parameter tensor, in params() order; shapes must match
  // (gradient checks substitute tape leaves through this)
  void adopt_params(const std::vector<Tensor>& tensors);

  Tensor zero_context() const { return crnn_.zero_state(); }

  // Algorithm: the utterance RNN summary is concatenated with the speaker's
  // attribute embedding and stepped once through the context RNN; the
  // attention RNN encodes the same utterance into attention memory.
  EncoderState encode_turn(Tape& tape, const Tensor& prev_context, std::span<const int> tokens,
                           int attribute) const;

  // Teacher-forced decoder pass. Step j consumes target[j-1] (EOS opens the
  // response) plus the context output, attention context, responder
  // embedding, and noise[j].
  GeneratorResult generator_forward(Tape& tape, const EncoderState& state, int responder,
                                    std::span<const int> target, const std::vector<Tensor>& noise,
                                    Rng& rng, SoftmaxMode loss_mode) const;

  // One autoregressive decoder step; returns the new state and the logits.
  std::pair<Tensor, Tensor> decode_step(Tape& tape, const Tensor& dec_state,
                                        const EncoderState& state, int prev_token, int responder,
                                        const Tensor& noise) const;
  Tensor initial_decoder_state(Tape& tape, const EncoderState& state) const;

  // Word-level probabilities that each response token is ground truth.
  Tensor discriminator_score(Tape& tape, const EncoderState& state, int responder,
                             std::span<const int> response) const;
  // Same pass over the generator's expected embeddings, keeping the
  // adversarial gradient path into the generator distributions.
  Tensor discriminator_score_soft(Tape& tape, const EncoderState& state, int responder,
                                  const std::vector<Tensor>& step_probs) const;

  SoftmaxMode train_loss_mode() const;

  const Embedding& word_embedding() const { return word_emb_; }
  const Embedding& attribute_embedding() const { return attr_emb_; }
  Embedding& mutable_attribute_embedding() { return attr_emb_; }

 private:
  // the one definition of parameter order
  template <typename Fn>
  void visit_params(Fn&& fn);
  void check_token_ids(std::span<const int> tokens) const;
  void check_attribute(int attribute) const;
  Tensor discriminator_from_inputs(Tape& tape, const EncoderState& state,
                                   const std::vector<Tensor>& step_inputs) const;

  ModelConfig cfg_;
  Embedding word_emb_;
  Embedding attr_emb_;
  GruStack ernn_fwd_, ernn_bwd_;  // utterance encoder
  GruStack arnn_fwd_, arnn_bwd_;  // attention memory encoder
  GruStack crnn_;                 // dialogue context
  Dense gen_init_;                // final encoder state -> decoder state
  GruStack drnn_;                 // decoder
  AdditiveAttention attn_;
  Dense out_proj_;                // hidden -> vocab logits
  Dense disc_init_fwd_, disc_init_bwd_;
  GruStack disc_fwd_, disc_bwd_;
  Dense disc_out_;                // 2*hidden -> 1, sigmoid outside
};

// Versioned checkpoint container: config header plus named parameter
// tensors, bit-exact on round trip.
struct CheckpointMeta {
  std::uint64_t vocab_hash = 0;
  std::uint64_t attr_hash = 0;
  int epoch = 0;
  long long global_step = 0;
  double train_alpha = 1.0;
};

void save_checkpoint(const PhredModel& model, const CheckpointMeta& meta, const std::string& path);
struct LoadedCheckpoint {
  PhredModel model;
  CheckpointMeta meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace phredgan
