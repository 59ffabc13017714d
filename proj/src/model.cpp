// SPDX-License-Identifier: Apache-2.0

#include "phredgan/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace phredgan {

using nlohmann::json;

std::string to_string(NoiseMode mode) {
  return mode == NoiseMode::kUtterance ? "utterance" : "word";
}

NoiseMode noise_mode_from(const std::string& name) {
  if (name == "utterance") return NoiseMode::kUtterance;
  if (name == "word") return NoiseMode::kWord;
  throw std::invalid_argument("noise mode must be 'utterance' or 'word', got '" + name + "'");
}

std::vector<Tensor> sample_noise(const NoiseSpec& spec, int steps, Rng& rng) {
  if (spec.alpha <= 0.0) throw std::invalid_argument("noise: variance alpha must be positive");
  if (steps < 1) throw std::invalid_argument("noise: need at least one step");
  double scale = std::sqrt(spec.alpha);
  auto draw = [&] {
    Tensor t = Tensor::zeros({spec.dim});
    for (double& v : t.mutable_values()) v = scale * rng.normal();
    return t;
  };
  std::vector<Tensor> out;
  out.reserve(steps);
  if (spec.mode == NoiseMode::kUtterance) {
    Tensor one = draw();
    for (int i = 0; i < steps; ++i) out.push_back(one);
  } else {
    for (int i = 0; i < steps; ++i) out.push_back(draw());
  }
  return out;
}

void ModelConfig::validate() const {
  if (vocab_size < 4) throw std::invalid_argument("model: vocab size must cover PAD/UNK/EOS plus text");
  if (attr_count < 1) throw std::invalid_argument("model: need at least one attribute");
  for (int v : {embed_size, attr_embed_size, hidden_size, num_layers, attn_size})
    if (v < 1) throw std::invalid_argument("model: sizes must be positive");
  if (max_response_len < 1) throw std::invalid_argument("model: max response length must be positive");
}

PhredModel::PhredModel(ModelConfig config, std::uint64_t seed) : cfg_(config) {
  cfg_.validate();
  const int e = cfg_.embed_size, ec = cfg_.attr_embed_size, h = cfg_.hidden_size;
  const int L = cfg_.num_layers, a = cfg_.attn_size, nz = cfg_.effective_noise_dim();

  Rng rng(Rng::derive(seed, 0x1417));
  word_emb_ = Embedding(cfg_.vocab_size, e, rng);
  attr_emb_ = Embedding(cfg_.attr_count, ec, rng);
  ernn_fwd_ = GruStack(e, h, L, rng);
  ernn_bwd_ = GruStack(e, h, L, rng);
  arnn_fwd_ = GruStack(e, h, L, rng);
  arnn_bwd_ = GruStack(e, h, L, rng);
  crnn_ = GruStack(2 * h + ec, h, L, rng);
  gen_init_ = Dense(3 * h, L * h, rng);
  drnn_ = GruStack(e + h + 2 * h + ec + nz, h, L, rng);
  attn_ = AdditiveAttention(h, 2 * h, a, rng);
  out_proj_ = Dense(h, cfg_.vocab_size, rng);
  disc_init_fwd_ = Dense(3 * h, L * h, rng);
  disc_init_bwd_ = Dense(3 * h, L * h, rng);
  disc_fwd_ = GruStack(e + ec, h, L, rng);
  disc_bwd_ = GruStack(e + ec, h, L, rng);
  disc_out_ = Dense(2 * h, 1, rng);
}

template <typename Fn>
void PhredModel::visit_params(Fn&& fn) {
  auto stack = [&](const std::string& prefix, GruStack& s, ParamGroup group) {
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      GruLayer& g = s.layers[l];
      const std::string base = prefix + ".l" + std::to_string(l) + ".";
      fn(base + "wr", g.wr, group);
      fn(base + "ur", g.ur, group);
      fn(base + "br", g.br, group);
      fn(base + "wz", g.wz, group);
      fn(base + "uz", g.uz, group);
      fn(base + "bz", g.bz, group);
      fn(base + "wh", g.wh, group);
      fn(base + "uh", g.uh, group);
      fn(base + "bh", g.bh, group);
    }
  };
  auto dense = [&](const std::string& prefix, Dense& d, ParamGroup group) {
    fn(prefix + ".w", d.w, group);
    fn(prefix + ".b", d.b, group);
  };

  fn("embed.word", word_emb_.table, ParamGroup::kShared);
  fn("embed.attr", attr_emb_.table, ParamGroup::kShared);
  stack("enc.utt_fwd", ernn_fwd_, ParamGroup::kShared);
  stack("enc.utt_bwd", ernn_bwd_, ParamGroup::kShared);
  stack("enc.att_fwd", arnn_fwd_, ParamGroup::kShared);
  stack("enc.att_bwd", arnn_bwd_, ParamGroup::kShared);
  stack("enc.ctx", crnn_, ParamGroup::kShared);
  dense("gen.init", gen_init_, ParamGroup::kGenerator);
  stack("gen.dec", drnn_, ParamGroup::kGenerator);
  fn("gen.attn.wq", attn_.wq, ParamGroup::kGenerator);
  fn("gen.attn.wk", attn_.wk, ParamGroup::kGenerator);
  fn("gen.attn.b", attn_.b, ParamGroup::kGenerator);
  fn("gen.attn.v", attn_.v, ParamGroup::kGenerator);
  dense("gen.out", out_proj_, ParamGroup::kGenerator);
  dense("disc.init_fwd", disc_init_fwd_, ParamGroup::kDiscriminator);
  dense("disc.init_bwd", disc_init_bwd_, ParamGroup::kDiscriminator);
  stack("disc.fwd", disc_fwd_, ParamGroup::kDiscriminator);
  stack("disc.bwd", disc_bwd_, ParamGroup::kDiscriminator);
  dense("disc.out", disc_out_, ParamGroup::kDiscriminator);
}

std::vector<ParamEntry> PhredModel::params() const {
  std::vector<ParamEntry> out;
  const_cast<PhredModel*>(this)->visit_params(
      [&](const std::string& name, Tensor& t, ParamGroup g) { out.push_back({name, t, g}); });
  return out;
}

std::vector<ParamEntry> PhredModel::side_params(ParamGroup side) const {
  std::vector<ParamEntry> out;
  for (auto& e : params())
    if (e.group == ParamGroup::kShared || e.group == side) out.push_back(std::move(e));
  return out;
}

void PhredModel::adopt_params(const std::vector<Tensor>& tensors) {
  std::size_t i = 0;
  visit_params([&](const std::string& name, Tensor& t, ParamGroup) {
    if (i >= tensors.size()) throw std::invalid_argument("model: too few tensors to adopt");
    if (!tensors[i].same_shape(t))
      throw std::invalid_argument("model: adopted shape mismatch for '" + name + "'");
    t = tensors[i++];
  });
  if (i != tensors.size()) throw std::invalid_argument("model: too many tensors to adopt");
}

void PhredModel::check_token_ids(std::span<const int> tokens) const {
  for (int t : tokens)
    if (t < 0 || t >= cfg_.vocab_size)
      throw std::invalid_argument("model: token id " + std::to_string(t) +
                                  " outside vocabulary of " + std::to_string(cfg_.vocab_size));
}

void PhredModel::check_attribute(int attribute) const {
  if (attribute < 0 || attribute >= cfg_.attr_count)
    throw std::invalid_argument("model: attribute id " + std::to_string(attribute) +
                                " outside attribute vocabulary of " + std::to_string(cfg_.attr_count));
}

EncoderState PhredModel::encode_turn(Tape& tape, const Tensor& prev_context,
                                     std::span<const int> tokens, int attribute) const {
  if (tokens.empty()) throw std::invalid_argument("model: cannot encode an empty utterance");
  check_token_ids(tokens);
  check_attribute(attribute);

  std::vector<Tensor> embedded;
  embedded.reserve(tokens.size());
  for (int t : tokens) embedded.push_back(word_emb_.lookup_one(tape, t));

  BidirResult utt = bidirectional_encode(tape, ernn_fwd_, ernn_bwd_, embedded);
  Tensor attr_row = attr_emb_.lookup_one(tape, attribute);
  Tensor ctx_in = concat(tape, {utt.summary, attr_row});
  Tensor ctx_state = crnn_.step(tape, prev_context, ctx_in);

  BidirResult att = bidirectional_encode(tape, arnn_fwd_, arnn_bwd_, embedded);
  std::vector<Tensor> key_rows;
  key_rows.reserve(att.outputs.size());
  for (const Tensor& o : att.outputs) key_rows.push_back(reshape(tape, o, {1, 2 * cfg_.hidden_size}));

  EncoderState state;
  state.context_state = ctx_state;
  state.context_output = crnn_.top(tape, ctx_state);
  state.attention_keys = concat(tape, key_rows, 0);
  state.final_state = concat(tape, {att.summary, state.context_output});
  return state;
}

Tensor PhredModel::initial_decoder_state(Tape& tape, const EncoderState& state) const {
  return reshape(tape, gen_init_(tape, state.final_state), {cfg_.num_layers, cfg_.hidden_size});
}

std::pair<Tensor, Tensor> PhredModel::decode_step(Tape& tape, const Tensor& dec_state,
                                                  const EncoderState& state, int prev_token,
                                                  int responder, const Tensor& noise) const {
  Tensor prev_emb = word_emb_.lookup_one(tape, prev_token);
  Tensor query = drnn_.top(tape, dec_state);
  auto att = attn_(tape, query, state.attention_keys);
  Tensor attr_row = attr_emb_.lookup_one(tape, responder);
  Tensor input = concat(tape, {prev_emb, state.context_output, att.context, attr_row, noise});
  Tensor next = drnn_.step(tape, dec_state, input);
  Tensor logits = out_proj_(tape, drnn_.top(tape, next));
  return {next, logits};
}

GeneratorResult PhredModel::generator_forward(Tape& tape, const EncoderState& state, int responder,
                                              std::span<const int> target,
                                              const std::vector<Tensor>& noise, Rng& rng,
                                              SoftmaxMode loss_mode) const {
  if (target.empty()) throw std::invalid_argument("model: generator needs a nonempty target");
  check_token_ids(target);
  check_attribute(responder);
  if (noise.size() < target.size())
    throw std::invalid_argument("model: need one noise draw per target step");

  GeneratorResult out;
  out.step_probs.reserve(target.size());
  out.step_losses.reserve(target.size());
  Tensor dec_state = initial_decoder_state(tape, state);
  int prev = Vocab::kEos;  // EOS doubles as the start-of-response token
  for (std::size_t j = 0; j < target.size(); ++j) {
    auto [next, logits] = decode_step(tape, dec_state, state, prev, responder, noise[j]);
    dec_state = next;
    out.step_probs.push_back(softmax(tape, logits));
    if (loss_mode == SoftmaxMode::kSampled)
      out.step_losses.push_back(
          mle_token_loss(tape, logits, target[j], SoftmaxMode::kSampled, cfg_.softmax_samples, rng));
    else
      out.step_losses.push_back(affine(
          tape, sum(tape, log_op(tape, slice(tape, out.step_probs.back(), target[j], 1))), -1.0, 0.0));
    prev = target[j];
  }
  return out;
}

SoftmaxMode PhredModel::train_loss_mode() const {
  return cfg_.vocab_size < cfg_.sampled_softmax_at ? SoftmaxMode::kFull : SoftmaxMode::kSampled;
}

Tensor PhredModel::discriminator_from_inputs(Tape& tape, const EncoderState& state,
                                             const std::vector<Tensor>& step_inputs) const {
  const int L = cfg_.num_layers, h = cfg_.hidden_size;
  const std::size_t n = step_inputs.size();
  Tensor fwd_state = reshape(tape, disc_init_fwd_(tape, state.final_state), {L, h});
  Tensor bwd_state = reshape(tape, disc_init_bwd_(tape, state.final_state), {L, h});

  std::vector<Tensor> fwd_tops(n), bwd_tops(n);
  for (std::size_t t = 0; t < n; ++t) {
    fwd_state = disc_fwd_.step(tape, fwd_state, step_inputs[t]);
    fwd_tops[t] = disc_fwd_.top(tape, fwd_state);
  }
  for (std::size_t t = n; t-- > 0;) {
    bwd_state = disc_bwd_.step(tape, bwd_state, step_inputs[t]);
    bwd_tops[t] = disc_bwd_.top(tape, bwd_state);
  }
  std::vector<Tensor> probs;
  probs.reserve(n);
  for (std::size_t t = 0; t < n; ++t)
    probs.push_back(sigmoid(tape, disc_out_(tape, concat(tape, {fwd_tops[t], bwd_tops[t]}))));
  return concat(tape, probs, 0);
}

Tensor PhredModel::discriminator_score(Tape& tape, const EncoderState& state, int responder,
                                       std::span<const int> response) const {
  if (response.empty()) throw std::invalid_argument("model: discriminator needs a nonempty response");
  check_token_ids(response);
  check_attribute(responder);
  Tensor attr_row = attr_emb_.lookup_one(tape, responder);
  std::vector<Tensor> inputs;
  inputs.reserve(response.size());
  for (int t : response)
    inputs.push_back(concat(tape, {word_emb_.lookup_one(tape, t), attr_row}));
  return discriminator_from_inputs(tape, state, inputs);
}

Tensor PhredModel::discriminator_score_soft(Tape& tape, const EncoderState& state, int responder,
                                            const std::vector<Tensor>& step_probs) const {
  if (step_probs.empty()) throw std::invalid_argument("model: discriminator needs a nonempty response");
  check_attribute(responder);
  Tensor attr_row = attr_emb_.lookup_one(tape, responder);
  std::vector<Tensor> inputs;
  inputs.reserve(step_probs.size());
  for (const Tensor& p : step_probs)
    inputs.push_back(concat(tape, {vecmat(tape, p, word_emb_.table), attr_row}));
  return discriminator_from_inputs(tape, state, inputs);
}

namespace {

constexpr char kMagic[4] = {'P', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const PhredModel& model, const CheckpointMeta& meta, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f.write(kMagic, 4);
  write_pod(f, kVersion);

  const ModelConfig& c = model.config();
  json header = {{"vocab_size", c.vocab_size},
                 {"attr_count", c.attr_count},
                 {"embed_size", c.embed_size},
                 {"attr_embed_size", c.attr_embed_size},
                 {"hidden_size", c.hidden_size},
                 {"num_layers", c.num_layers},
                 {"attn_size", c.attn_size},
                 {"noise_mode", to_string(c.noise_mode)},
                 {"noise_dim", c.noise_dim},
                 {"sampled_softmax_at", c.sampled_softmax_at},
                 {"softmax_samples", c.softmax_samples},
                 {"max_response_len", c.max_response_len},
                 {"vocab_hash", meta.vocab_hash},
                 {"attr_hash", meta.attr_hash},
                 {"epoch", meta.epoch},
                 {"global_step", meta.global_step},
                 {"train_alpha", meta.train_alpha}};
  std::string head = header.dump();
  write_pod(f, static_cast<std::uint32_t>(head.size()));
  f.write(head.data(), static_cast<std::streamsize>(head.size()));

  auto entries = model.params();
  write_pod(f, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    write_pod(f, static_cast<std::uint16_t>(e.name.size()));
    f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_pod(f, static_cast<std::uint8_t>(e.tensor.rank()));
    for (int d : e.tensor.shape()) write_pod(f, static_cast<std::uint32_t>(d));
    auto v = e.tensor.values();
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("checkpoint: write to " + path + " failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  auto version = read_pod<std::uint32_t>(f);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  auto head_len = read_pod<std::uint32_t>(f);
  std::string head(head_len, '\0');
  f.read(head.data(), head_len);
  if (!f) throw std::runtime_error("checkpoint: truncated header");
  json header = json::parse(head);

  ModelConfig c;
  c.vocab_size = header.at("vocab_size").get<int>();
  c.attr_count = header.at("attr_count").get<int>();
  c.embed_size = header.at("embed_size").get<int>();
  c.attr_embed_size = header.at("attr_embed_size").get<int>();
  c.hidden_size = header.at("hidden_size").get<int>();
  c.num_layers = header.at("num_layers").get<int>();
  c.attn_size = header.at("attn_size").get<int>();
  c.noise_mode = noise_mode_from(header.at("noise_mode").get<std::string>());
  c.noise_dim = header.at("noise_dim").get<int>();
  c.sampled_softmax_at = header.at("sampled_softmax_at").get<int>();
  c.softmax_samples = header.at("softmax_samples").get<int>();
  c.max_response_len = header.at("max_response_len").get<int>();

  CheckpointMeta meta;
  meta.vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
  meta.attr_hash = header.at("attr_hash").get<std::uint64_t>();
  meta.epoch = header.at("epoch").get<int>();
  meta.global_step = header.at("global_step").get<long long>();
  meta.train_alpha = header.at("train_alpha").get<double>();

  LoadedCheckpoint out{PhredModel(c, 0), meta};
  auto entries = out.model.params();
  auto count = read_pod<std::uint32_t>(f);
  if (count != entries.size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  for (auto& e : entries) {
    auto name_len = read_pod<std::uint16_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (name != e.name) throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
    auto rank = read_pod<std::uint8_t>(f);
    if (rank != e.tensor.rank())
      throw std::runtime_error("checkpoint: rank mismatch for '" + name + "'");
    int sz = 1;
    for (int d = 0; d < rank; ++d) {
      auto extent = read_pod<std::uint32_t>(f);
      if (static_cast<int>(extent) != e.tensor.shape()[d])
        throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
      sz *= static_cast<int>(extent);
    }
    auto buf = e.tensor.mutable_values();
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(sz * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated tensor data for '" + name + "'");
  }
  return out;
}

}  // namespace phredgan
