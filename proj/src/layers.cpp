// SPDX-License-Identifier: Apache-2.0

#include "phredgan/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace phredgan {

void xavier_fill(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
}

Dense::Dense(int in, int out, Rng& rng) {
  w = Tensor::zeros({out, in});
  b = Tensor::zeros({out});
  xavier_fill(w, in, out, rng);
}

Tensor Dense::operator()(Tape& tape, const Tensor& x) const {
  return add(tape, matmul(tape, w, x), b);
}

Embedding::Embedding(int vocab, int dim, Rng& rng) {
  table = Tensor::zeros({vocab, dim});
  xavier_fill(table, vocab, dim, rng);
}

Tensor Embedding::lookup(Tape& tape, std::vector<int> ids) const {
  return rows(tape, table, std::move(ids));
}

Tensor Embedding::lookup_one(Tape& tape, int id) const {
  return reshape(tape, rows(tape, table, {id}), {dim()});
}

GruStack::GruStack(int input, int hidden, int num_layers, Rng& rng)
    : input_size(input), hidden_size(hidden) {
  if (num_layers < 1) throw std::invalid_argument("gru: need at least one layer");
  layers.reserve(num_layers);
  for (int l = 0; l < num_layers; ++l) {
    int in = l == 0 ? input : hidden;
    GruLayer g;
    g.wr = Tensor::zeros({hidden, in});
    g.ur = Tensor::zeros({hidden, hidden});
    g.br = Tensor::zeros({hidden});
    g.wz = Tensor::zeros({hidden, in});
    g.uz = Tensor::zeros({hidden, hidden});
    g.bz = Tensor::zeros({hidden});
    g.wh = Tensor::zeros({hidden, in});
    g.uh = Tensor::zeros({hidden, hidden});
    g.bh = Tensor::zeros({hidden});
    xavier_fill(g.wr, in, hidden, rng);
    xavier_fill(g.ur, hidden, hidden, rng);
    xavier_fill(g.wz, in, hidden, rng);
    xavier_fill(g.uz, hidden, hidden, rng);
    xavier_fill(g.wh, in, hidden, rng);
    xavier_fill(g.uh, hidden, hidden, rng);
    layers.push_back(std::move(g));
  }
}

Tensor GruStack::zero_state() const {
  return Tensor::zeros({num_layers(), hidden_size});
}

Tensor GruStack::step(Tape& tape, const Tensor& state, const Tensor& input) const {
  if (input.rank() != 1 || input.shape()[0] != input_size)
    throw std::invalid_argument("gru: input shape " + shape_str(input.shape()) + " does not match input size " +
                                std::to_string(input_size));
  if (state.rank() != 2 || state.shape()[0] != num_layers() || state.shape()[1] != hidden_size)
    throw std::invalid_argument("gru: state shape " + shape_str(state.shape()) + " does not match stack (" +
                                std::to_string(num_layers()) + "," + std::to_string(hidden_size) + ")");
  Tensor x = input;
  std::vector<Tensor> next;
  next.reserve(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const GruLayer& g = layers[l];
    Tensor h = reshape(tape, slice(tape, state, static_cast<int>(l), 1), {hidden_size});
    Tensor r = sigmoid(tape, add(tape, add(tape, matmul(tape, g.wr, x), matmul(tape, g.ur, h)), g.br));
    Tensor z = sigmoid(tape, add(tape, add(tape, matmul(tape, g.wz, x), matmul(tape, g.uz, h)), g.bz));
    Tensor cand = tanh_op(
        tape, add(tape, add(tape, matmul(tape, g.wh, x), matmul(tape, g.uh, mul(tape, r, h))), g.bh));
    Tensor keep = affine(tape, z, -1.0, 1.0);  // 1 - z
    Tensor hnew = add(tape, mul(tape, keep, h), mul(tape, z, cand));
    next.push_back(reshape(tape, hnew, {1, hidden_size}));
    x = hnew;
  }
  return concat(tape, next, 0);
}

Tensor GruStack::top(Tape& tape, const Tensor& state) const {
  return reshape(tape, slice(tape, state, num_layers() - 1, 1), {hidden_size});
}

BidirResult bidirectional_encode(Tape& tape, const GruStack& fwd, const GruStack& bwd,
                                 const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("bidirectional_encode: empty input sequence");
  const std::size_t n = inputs.size();

  std::vector<Tensor> fwd_tops(n), bwd_tops(n);
  Tensor fstate = fwd.zero_state();
  for (std::size_t t = 0; t < n; ++t) {
    fstate = fwd.step(tape, fstate, inputs[t]);
    fwd_tops[t] = fwd.top(tape, fstate);
  }
  Tensor bstate = bwd.zero_state();
  for (std::size_t t = n; t-- > 0;) {
    bstate = bwd.step(tape, bstate, inputs[t]);
    bwd_tops[t] = bwd.top(tape, bstate);
  }

  BidirResult out;
  out.outputs.reserve(n);
  for (std::size_t t = 0; t < n; ++t)
    out.outputs.push_back(concat(tape, {fwd_tops[t], bwd_tops[t]}));
  out.fwd_final = fstate;
  out.bwd_final = bstate;
  out.summary = concat(tape, {fwd_tops[n - 1], bwd_tops[0]});
  return out;
}

AdditiveAttention::AdditiveAttention(int query_size, int key_size, int attn_size, Rng& rng) {
  wq = Tensor::zeros({attn_size, query_size});
  wk = Tensor::zeros({key_size, attn_size});
  b = Tensor::zeros({attn_size});
  v = Tensor::zeros({attn_size});
  xavier_fill(wq, query_size, attn_size, rng);
  xavier_fill(wk, key_size, attn_size, rng);
  xavier_fill(v, attn_size, 1, rng);
}

AdditiveAttention::Result AdditiveAttention::operator()(Tape& tape, const Tensor& query,
                                                        const Tensor& keys) const {
  if (keys.rank() != 2 || keys.shape()[0] < 1)
    throw std::invalid_argument("attend: keys must be a nonempty (T,key) matrix, got " +
                                shape_str(keys.shape()));
  Tensor qterm = add(tape, matmul(tape, wq, query), b);
  Tensor scores = matmul(tape, tanh_op(tape, add_rowvec(tape, matmul(tape, keys, wk), qterm)), v);
  Tensor weights = softmax(tape, scores);
  return {vecmat(tape, weights, keys), weights};
}

Tensor mle_token_loss(Tape& tape, const Tensor& logits, int target, SoftmaxMode mode,
                      int samples, Rng& rng) {
  if (logits.rank() != 1)
    throw std::invalid_argument("token_loss: logits must be rank-1, got " + shape_str(logits.shape()));
  const int vocab = logits.shape()[0];
  if (target < 0 || target >= vocab)
    throw std::invalid_argument("token_loss: target " + std::to_string(target) +
                                " outside vocabulary of " + std::to_string(vocab));

  if (mode == SoftmaxMode::kFull) {
    Tensor p = softmax(tape, logits);
    Tensor lp = log_op(tape, slice(tape, p, target, 1));
    return affine(tape, sum(tape, lp), -1.0, 0.0);
  }

  if (samples < 1 || samples > vocab - 1)
    throw std::invalid_argument("token_loss: sample count " + std::to_string(samples) +
                                " must lie in [1, vocab-1]");
  // distinct negatives via a partial Fisher-Yates over the vocabulary
  // minus the target
  std::vector<int> pool;
  pool.reserve(vocab - 1);
  for (int i = 0; i < vocab; ++i)
    if (i != target) pool.push_back(i);
  std::vector<int> ids;
  ids.reserve(samples + 1);
  ids.push_back(target);
  for (int i = 0; i < samples; ++i) {
    int j = i + rng.uniform_int(static_cast<int>(pool.size()) - i);
    std::swap(pool[i], pool[j]);
    ids.push_back(pool[i]);
  }
  Tensor cand = rows(tape, logits, std::move(ids));
  Tensor p = softmax(tape, cand);
  Tensor lp = log_op(tape, slice(tape, p, 0, 1));
  return affine(tape, sum(tape, lp), -1.0, 0.0);
}

}  // namespace phredgan
