// SPDX-License-Identifier: Apache-2.0
//
// Parameter bundles and pure step functions for the three networks:
// embeddings, multi-layer GRU stacks, bidirectional wrappers, additive
// attention, dense projections, and the token loss heads. Layers never
// mutate their own parameters; the trainer is the single writer.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "phredgan/ops.hpp"
#include "phredgan/rng.hpp"
#include "phredgan/tensor.hpp"

namespace phredgan {

// U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))
void xavier_fill(Tensor& t, int fan_in, int fan_out, Rng& rng);

struct Dense {
  Tensor w;  // (out, in)
  Tensor b;  // (out)

  Dense() = default;
  Dense(int in, int out, Rng& rng);
  Tensor operator()(Tape& tape, const Tensor& x) const;
};

struct Embedding {
  Tensor table;  // (vocab, dim)

  Embedding() = default;
  Embedding(int vocab, int dim, Rng& rng);
  int vocab() const { return table.shape()[0]; }
  int dim() const { return table.shape()[1]; }

  // (n, dim) for n ids
  Tensor lookup(Tape& tape, std::vector<int> ids) const;
  // (dim) for one id
  Tensor lookup_one(Tape& tape, int id) const;
};

// Gate convention:
//   r = sigmoid(Wr x + Ur h + br)
//   z = sigmoid(Wz x + Uz h + bz)
//   c = tanh(Wh x + Uh (r . h) + bh)
//   h' = (1 - z) . h + z . c
struct GruLayer {
  Tensor wr, ur, br;
  Tensor wz, uz, bz;
  Tensor wh, uh, bh;
};

struct GruStack {
  int input_size = 0;
  int hidden_size = 0;
  std::vector<GruLayer> layers;

  GruStack() = default;
  GruStack(int input, int hidden, int num_layers, Rng& rng);
  int num_layers() const { return static_cast<int>(layers.size()); }

  // all-zero (num_layers, hidden) state
  Tensor zero_state() const;
  // state (num_layers, hidden) + input (input_size) -> next state
  Tensor step(Tape& tape, const Tensor& state, const Tensor& input) const;
  // top layer of a state as a rank-1 vector
  Tensor top(Tape& tape, const Tensor& state) const;
};

struct BidirResult {
  std::vector<Tensor> outputs;  // per position, concat(fwd_top, bwd_top), width 2h
  Tensor fwd_final;             // (layers, hidden)
  Tensor bwd_final;             // (layers, hidden)
  Tensor summary;               // concat of final tops, width 2h
};

// fwd consumes inputs left to right, bwd right to left; output t pairs the
// two directions' top states at position t
BidirResult bidirectional_encode(Tape& tape, const GruStack& fwd, const GruStack& bwd,
                                 const std::vector<Tensor>& inputs);

struct AdditiveAttention {
  Tensor wq;  // (attn, query)
  Tensor wk;  // (key, attn)
  Tensor b;   // (attn)
  Tensor v;   // (attn)

  AdditiveAttention() = default;
  AdditiveAttention(int query_size, int key_size, int attn_size, Rng& rng);

  struct Result {
    Tensor context;  // (key)
    Tensor weights;  // (T), softmax-normalized
  };
  // keys is the (T, key) attention memory
  Result operator()(Tape& tape, const Tensor& query, const Tensor& keys) const;
};

enum class SoftmaxMode { kFull, kSampled };

// -log P(target) from a logit vector. Sampled mode estimates the loss over
// {target} plus `samples` distinct negatives drawn uniformly from the rest
// of the vocabulary; with a uniform proposal the log-correction term is a
// constant shift across candidates and cancels inside the softmax.
Tensor mle_token_loss(Tape& tape, const Tensor& logits, int target, SoftmaxMode mode,
                      int samples, Rng& rng);

}  // namespace phredgan
