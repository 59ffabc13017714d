// SPDX-License-Identifier: Apache-2.0

#include "phredgan/inference.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace phredgan {

void InferenceConfig::validate() const {
  if (alpha <= 0.0) throw std::invalid_argument("inference: alpha must be positive");
  if (samples < 1) throw std::invalid_argument("inference: need at least one sample");
  if (max_len < 0) throw std::invalid_argument("inference: max_len must be nonnegative");
}

double rank_score(std::span<const double> word_probs) {
  double acc = 0.0;
  for (double p : word_probs) acc += std::log(p < kLogFloor ? kLogFloor : p);
  return acc / static_cast<double>(word_probs.size());
}

void sort_candidates(std::vector<GenerationCandidate>& candidates) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const GenerationCandidate& a, const GenerationCandidate& b) {
                     return a.rank_score > b.rank_score;
                   });
}

int decode_cap(const PhredModel& model, const InferenceConfig& cfg) {
  return cfg.max_len > 0 ? cfg.max_len : 2 * model.config().max_response_len;
}

EncoderState encode_context(const PhredModel& model, Tape& tape, std::span<const Turn> context) {
  if (context.empty()) throw std::invalid_argument("inference: empty dialogue context");
  Tensor state = model.zero_context();
  EncoderState enc;
  for (const Turn& turn : context) {
    enc = model.encode_turn(tape, state, turn.tokens, turn.attribute);
    state = enc.context_state;
  }
  return enc;
}

std::vector<int> greedy_decode(const PhredModel& model, Tape& tape, const EncoderState& state,
                               int responder, const std::vector<Tensor>& noise, int max_len) {
  if (max_len < 1) throw std::invalid_argument("inference: decode needs max_len >= 1");
  if (static_cast<int>(noise.size()) < max_len)
    throw std::invalid_argument("inference: need one noise draw per possible step");
  std::vector<int> out;
  Tensor dec_state = model.initial_decoder_state(tape, state);
  int prev = Vocab::kEos;
  for (int j = 0; j < max_len; ++j) {
    auto [next, logits] = model.decode_step(tape, dec_state, state, prev, responder, noise[j]);
    dec_state = next;
    auto v = logits.values();
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
      if (v[i] > v[best]) best = i;
    out.push_back(best);
    if (best == Vocab::kEos) break;
    prev = best;
  }
  return out;
}

std::vector<GenerationCandidate> generate_ranked(const PhredModel& model,
                                                 std::span<const Turn> context, int responder,
                                                 const InferenceConfig& cfg) {
  cfg.validate();
  const int cap = decode_cap(model, cfg);
  const NoiseSpec spec{model.config().noise_mode, cfg.alpha, model.config().effective_noise_dim()};

  // encode once, then decode each candidate on its own short-lived tape
  Tape ctx_tape;
  EncoderState enc = encode_context(model, ctx_tape, context);
  enc.context_state = enc.context_state.detached();
  enc.context_output = enc.context_output.detached();
  enc.attention_keys = enc.attention_keys.detached();
  enc.final_state = enc.final_state.detached();

  std::vector<GenerationCandidate> candidates;
  candidates.reserve(cfg.samples);
  for (int l = 0; l < cfg.samples; ++l) {
    // one noise stream per candidate, indexed so concurrency could not
    // change the draws
    Rng rng(Rng::derive(cfg.seed, 0xca0d, static_cast<std::uint64_t>(l)));
    auto noise = sample_noise(spec, cap, rng);
    Tape tape;
    GenerationCandidate cand;
    cand.tokens = greedy_decode(model, tape, enc, responder, noise, cap);
    Tensor probs = model.discriminator_score(tape, enc, responder, cand.tokens);
    cand.word_probs.assign(probs.values().begin(), probs.values().end());
    cand.rank_score = rank_score(cand.word_probs);
    candidates.push_back(std::move(cand));
  }
  sort_candidates(candidates);
  return candidates;
}

std::vector<ContextRef> enumerate_contexts(const std::vector<Dialogue>& dialogues) {
  std::vector<ContextRef> out;
  for (const Dialogue& d : dialogues)
    for (std::size_t i = 1; i < d.turns.size(); ++i)
      out.push_back({&d, static_cast<int>(i)});
  return out;
}

AlphaSearchResult search_noise_variance(const PhredModel& model,
                                        const std::vector<Dialogue>& dev_set,
                                        const InferenceConfig& cfg, std::vector<int> grid) {
  if (dev_set.empty()) throw std::invalid_argument("alpha search: empty dev set");
  if (grid.empty()) {
    grid.resize(30);
    std::iota(grid.begin(), grid.end(), 1);
  }
  auto contexts = enumerate_contexts(dev_set);
  if (contexts.empty()) throw std::invalid_argument("alpha search: dev set has no usable contexts");

  AlphaSearchResult result;
  result.grid = grid;
  const int cap = decode_cap(model, cfg);
  double best_score = 0.0;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    double total = 0.0;
    for (std::size_t c = 0; c < contexts.size(); ++c) {
      const auto& ctx = contexts[c];
      Tape tape;
      std::span<const Turn> prefix(ctx.dialogue->turns.data(), ctx.next_turn);
      EncoderState enc = encode_context(model, tape, prefix);
      int responder = ctx.dialogue->turns[ctx.next_turn].attribute;
      // the same base stream per context: alphas are compared on common
      // random numbers, L = 1
      Rng rng(Rng::derive(cfg.seed, 0xa1fa, static_cast<std::uint64_t>(c)));
      NoiseSpec spec{model.config().noise_mode, static_cast<double>(grid[gi]),
                     model.config().effective_noise_dim()};
      auto noise = sample_noise(spec, cap, rng);
      std::vector<int> decoded = greedy_decode(model, tape, enc, responder, noise, cap);
      Tensor probs = model.discriminator_score(tape, enc, responder, decoded);
      double word_mean = 0.0;
      auto pv = probs.values();
      for (double p : pv) word_mean -= std::log(p < kLogFloor ? kLogFloor : p);
      total += word_mean / static_cast<double>(pv.size());
    }
    double score = total / static_cast<double>(contexts.size());
    result.scores.push_back(score);
    if (gi == 0 || score < best_score) {
      best_score = score;
      result.best_alpha = grid[gi];
    }
  }
  return result;
}

namespace {

std::string render_tokens(const Vocab& vocab, const std::vector<int>& ids) {
  return join_tokens(vocab.decode(ids));
}

}  // namespace

void chat_session(const PhredModel& model, const Vocab& vocab, const AttributeVocab& attrs,
                  const InferenceConfig& cfg, std::istream& in, std::ostream& out,
                  int initial_topk) {
  std::vector<Turn> context;
  int responder = attrs.size() > 1 ? 1 : 0;
  int speaker = 0;
  int topk = initial_topk < 1 ? 1 : initial_topk;
  std::uint64_t turn_seed = cfg.seed;

  auto list_attrs = [&] {
    std::string s;
    for (const auto& n : attrs.names()) s += (s.empty() ? "" : ", ") + n;
    return s;
  };

  out << "persona chat; responder=" << attrs.name(responder) << " speaker=" << attrs.name(speaker)
      << "; /persona NAME, /speaker NAME, /topk K, /reset, /quit\n";
  std::string line;
  while (out << "> " << std::flush, std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "/quit") break;
    if (line == "/reset") {
      context.clear();
      turn_seed = cfg.seed;
      out << "context cleared\n";
      continue;
    }
    if (line.rfind("/persona ", 0) == 0 || line.rfind("/speaker ", 0) == 0) {
      bool is_persona = line[1] == 'p';
      std::string name = line.substr(9);
      auto id = attrs.find(name);
      if (!id) {
        out << "unknown attribute '" << name << "'; valid attributes: " << list_attrs() << "\n";
        continue;
      }
      (is_persona ? responder : speaker) = *id;
      out << (is_persona ? "responder" : "speaker") << " set to " << name << "\n";
      continue;
    }
    if (line.rfind("/topk ", 0) == 0) {
      int k = std::atoi(line.c_str() + 6);
      if (k < 1) {
        out << "topk must be >= 1\n";
        continue;
      }
      topk = k;
      continue;
    }
    if (line[0] == '/') {
      out << "unknown command " << line << "\n";
      continue;
    }

    Turn user;
    user.tokens = vocab.encode(tokenize(line));
    user.tokens.push_back(Vocab::kEos);
    user.attribute = speaker;
    context.push_back(std::move(user));

    InferenceConfig turn_cfg = cfg;
    turn_cfg.seed = turn_seed++;
    auto candidates = generate_ranked(model, context, responder, turn_cfg);
    int show = std::min<int>(topk, static_cast<int>(candidates.size()));
    for (int i = 0; i < show; ++i) {
      const auto& c = candidates[i];
      out << attrs.name(responder) << " [" << std::exp(c.rank_score) << "]: "
          << render_tokens(vocab, c.tokens) << "\n";
    }
    Turn reply;
    reply.tokens = candidates.front().tokens;
    if (reply.tokens.empty() || reply.tokens.back() != Vocab::kEos)
      reply.tokens.push_back(Vocab::kEos);
    reply.attribute = responder;
    context.push_back(std::move(reply));
  }
}

}  // namespace phredgan
