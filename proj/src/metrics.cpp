// SPDX-License-Identifier: Apache-2.0

#include "phredgan/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace phredgan {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, long long> ngram_counts(const TokenSeq& seq, int n) {
  std::map<Ngram, long long> counts;
  if (static_cast<int>(seq.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i)
    ++counts[Ngram(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

}  // namespace

double perplexity(const PhredModel& model, const std::vector<Dialogue>& eval_set,
                  std::uint64_t seed) {
  if (eval_set.empty()) throw std::invalid_argument("perplexity: empty evaluation set");
  const NoiseSpec spec{model.config().noise_mode, 1.0, model.config().effective_noise_dim()};
  double total_nll = 0.0;
  long long words = 0;
  for (std::size_t di = 0; di < eval_set.size(); ++di) {
    const Dialogue& d = eval_set[di];
    if (d.turns.size() < 2) continue;
    Tape tape;
    Tensor context = model.zero_context();
    Rng rng(Rng::derive(seed, 0xeba1, di));
    for (std::size_t i = 0; i + 1 < d.turns.size(); ++i) {
      EncoderState enc = model.encode_turn(tape, context, d.turns[i].tokens, d.turns[i].attribute);
      context = enc.context_state;
      const Turn& next = d.turns[i + 1];
      auto noise = sample_noise(spec, static_cast<int>(next.tokens.size()), rng);
      auto gen = model.generator_forward(tape, enc, next.attribute, next.tokens, noise, rng,
                                         SoftmaxMode::kFull);
      for (const Tensor& l : gen.step_losses) {
        total_nll += l.item();
        ++words;
      }
    }
  }
  if (words == 0) throw std::invalid_argument("perplexity: no scorable target words");
  return std::exp(total_nll / static_cast<double>(words));
}

double bleu4(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
             NgramTallies* tallies) {
  if (hypotheses.empty() || hypotheses.size() != references.size())
    throw std::invalid_argument("bleu: need equally many hypotheses and references");

  long long matches[4] = {0, 0, 0, 0}, totals[4] = {0, 0, 0, 0};
  long long hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<long long>(hypotheses[i].size());
    ref_len += static_cast<long long>(references[i].size());
    for (int n = 1; n <= 4; ++n) {
      auto hyp_counts = ngram_counts(hypotheses[i], n);
      auto ref_counts = ngram_counts(references[i], n);
      for (const auto& [gram, count] : hyp_counts) {
        totals[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (tallies) {
    for (int n = 0; n < 4; ++n) {
      tallies->bleu_matches[n] = matches[n];
      tallies->bleu_totals[n] = totals[n];
    }
    tallies->hyp_length = hyp_len;
    tallies->ref_length = ref_len;
  }

  if (totals[0] == 0 || matches[0] == 0) return 0.0;
  bool smooth = false;
  for (int n = 1; n < 4; ++n)
    if (matches[n] == 0) smooth = true;
  double log_precision = 0.0;
  for (int n = 0; n < 4; ++n) {
    double num = static_cast<double>(matches[n]);
    double den = static_cast<double>(totals[n]);
    if (n >= 1 && smooth) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0 || den == 0.0) return 0.0;
    log_precision += 0.25 * std::log(num / den);
  }
  double bp = hyp_len >= ref_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_precision);
}

double rouge2_f1(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references) {
  if (hypotheses.empty() || hypotheses.size() != references.size())
    throw std::invalid_argument("rouge: need equally many hypotheses and references");
  double total = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    auto hyp = ngram_counts(hypotheses[i], 2);
    auto ref = ngram_counts(references[i], 2);
    long long hyp_total = 0, ref_total = 0, overlap = 0;
    for (const auto& [gram, c] : hyp) hyp_total += c;
    for (const auto& [gram, c] : ref) ref_total += c;
    for (const auto& [gram, c] : hyp) {
      auto it = ref.find(gram);
      if (it != ref.end()) overlap += std::min(c, it->second);
    }
    if (hyp_total == 0 || ref_total == 0 || overlap == 0) continue;  // pair contributes 0
    double p = static_cast<double>(overlap) / static_cast<double>(hyp_total);
    double r = static_cast<double>(overlap) / static_cast<double>(ref_total);
    total += 2.0 * p * r / (p + r);
  }
  return total / static_cast<double>(hypotheses.size());
}

double distinct_n(const std::vector<TokenSeq>& hypotheses, int n, long long* unique_out,
                  long long* total_out) {
  if (n < 1) throw std::invalid_argument("distinct: n must be >= 1");
  std::set<Ngram> unique;
  long long total = 0;
  for (const auto& hyp : hypotheses)
    for (const auto& [gram, c] : ngram_counts(hyp, n)) {
      unique.insert(gram);
      total += c;
    }
  if (unique_out) *unique_out = static_cast<long long>(unique.size());
  if (total_out) *total_out = total;
  if (total == 0) return 0.0;
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

MetricsReport evaluate_model(const PhredModel& model, const std::vector<Dialogue>& eval_set,
                             const std::vector<TokenSeq>& hypotheses,
                             const std::vector<TokenSeq>& references, std::uint64_t seed) {
  MetricsReport report;
  report.perplexity = perplexity(model, eval_set, seed);
  report.bleu4 = bleu4(hypotheses, references, &report.counts);
  report.rouge2_f1 = rouge2_f1(hypotheses, references);
  report.distinct1 =
      distinct_n(hypotheses, 1, &report.counts.distinct1_unique, &report.counts.distinct1_total);
  report.distinct2 =
      distinct_n(hypotheses, 2, &report.counts.distinct2_unique, &report.counts.distinct2_total);
  long long words = 0;
  for (const Dialogue& d : eval_set)
    for (std::size_t i = 1; i < d.turns.size(); ++i)
      words += static_cast<long long>(d.turns[i].tokens.size());
  report.counts.eval_words = words;
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["perplexity"] = perplexity;
  j["bleu4"] = bleu4;
  j["rouge2_f1"] = rouge2_f1;
  j["distinct1"] = distinct1;
  j["distinct2"] = distinct2;
  nlohmann::json c;
  for (int n = 0; n < 4; ++n) {
    c["bleu_matches"].push_back(counts.bleu_matches[n]);
    c["bleu_totals"].push_back(counts.bleu_totals[n]);
  }
  c["hyp_length"] = counts.hyp_length;
  c["ref_length"] = counts.ref_length;
  c["distinct1_unique"] = counts.distinct1_unique;
  c["distinct1_total"] = counts.distinct1_total;
  c["distinct2_unique"] = counts.distinct2_unique;
  c["distinct2_total"] = counts.distinct2_total;
  c["eval_words"] = counts.eval_words;
  j["counts"] = c;
  return j.dump(2);
}

std::string MetricsReport::to_table() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "metric      value\n"
                "----------  ----------\n"
                "perplexity  %.6f\n"
                "bleu4       %.6f\n"
                "rouge2_f1   %.6f\n"
                "distinct1   %.6f\n"
                "distinct2   %.6f\n",
                perplexity, bleu4, rouge2_f1, distinct1, distinct2);
  return buf;
}

}  // namespace phredgan
