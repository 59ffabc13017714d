// SPDX-License-Identifier: Apache-2.0
//
// Autoregressive generation with greedy decoding, the noise-variance
// linear search, and L-sample candidate generation reranked by the
// word-level discriminator.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "phredgan/model.hpp"

namespace phredgan {

struct InferenceConfig {
  double alpha = 1.0;
  int samples = 64;   // L
  int max_len = 0;    // 0: twice the longest training response
  std::uint64_t seed = 1;

  void validate() const;
};

struct GenerationCandidate {
  std::vector<int> tokens;          // ends with EOS unless cut at max_len
  std::vector<double> word_probs;   // discriminator word probabilities
  double rank_score = 0.0;          // mean log word probability
};

// mean of clamped log word probabilities; length-fair by construction
double rank_score(std::span<const double> word_probs);
void sort_candidates(std::vector<GenerationCandidate>& candidates);

// A dialogue context is encoded turn by turn from the zero state.
EncoderState encode_context(const PhredModel& model, Tape& tape,
                            std::span<const Turn> context);

// Argmax token per step, feeding each output back in; stops after EOS or
// at max_len tokens.
std::vector<int> greedy_decode(const PhredModel& model, Tape& tape, const EncoderState& state,
                               int responder, const std::vector<Tensor>& noise, int max_len);

// L independent noise streams -> L greedy decodes -> discriminator scores,
// sorted by rank score descending (stable).
std::vector<GenerationCandidate> generate_ranked(const PhredModel& model,
                                                 std::span<const Turn> context, int responder,
                                                 const InferenceConfig& cfg);

int decode_cap(const PhredModel& model, const InferenceConfig& cfg);

// every (dialogue prefix, next-turn responder) pair of a corpus
struct ContextRef {
  const Dialogue* dialogue;
  int next_turn;  // the turn being responded to is next_turn - 1
};
std::vector<ContextRef> enumerate_contexts(const std::vector<Dialogue>& dialogues);

struct AlphaSearchResult {
  int best_alpha = 0;
  std::vector<int> grid;
  std::vector<double> scores;  // mean over contexts of mean -log D(G(.))
};

// Linear search over the grid with one greedy sample per context; ties
// break toward the smaller alpha.
AlphaSearchResult search_noise_variance(const PhredModel& model,
                                        const std::vector<Dialogue>& dev_set,
                                        const InferenceConfig& cfg,
                                        std::vector<int> grid = {});

// Interactive REPL over generate_ranked. Commands: /reset, /persona NAME,
// /speaker NAME, /topk K, /quit; anything else is a user turn.
void chat_session(const PhredModel& model, const Vocab& vocab, const AttributeVocab& attrs,
                  const InferenceConfig& cfg, std::istream& in, std::ostream& out,
                  int initial_topk = 1);

}  // namespace phredgan
