// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics: teacher-forced perplexity under the full softmax,
// corpus-level BLEU-4 with add-one smoothing on the higher orders,
// macro-averaged ROUGE-2 F1, and distinct-1/2. EOS and PAD never enter the
// n-gram counts; token sequences here are already decoded strings.

#pragma once

#include <string>
#include <vector>

#include "phredgan/model.hpp"

namespace phredgan {

using TokenSeq = std::vector<std::string>;

struct NgramTallies {
  long long bleu_matches[4] = {0, 0, 0, 0};
  long long bleu_totals[4] = {0, 0, 0, 0};
  long long hyp_length = 0;
  long long ref_length = 0;
  long long distinct1_unique = 0, distinct1_total = 0;
  long long distinct2_unique = 0, distinct2_total = 0;
  long long eval_words = 0;
};

struct MetricsReport {
  double perplexity = 0.0;
  double bleu4 = 0.0;
  double rouge2_f1 = 0.0;
  double distinct1 = 0.0;
  double distinct2 = 0.0;
  NgramTallies counts;

  std::string to_json() const;
  std::string to_table() const;
};

// exp of the mean per-word NLL over all (non-pad) target words, evaluated
// teacher-forced with the full softmax head
double perplexity(const PhredModel& model, const std::vector<Dialogue>& eval_set,
                  std::uint64_t seed = 1);

// geometric mean of modified n-gram precisions, n = 1..4, with brevity
// penalty; when any order >= 2 has zero matches, every order >= 2 gets +1
// on numerator and denominator
double bleu4(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references,
             NgramTallies* tallies = nullptr);

// clipped bigram-overlap F1 per pair, macro-averaged
double rouge2_f1(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references);

// unique n-grams over total n-grams across all hypotheses
double distinct_n(const std::vector<TokenSeq>& hypotheses, int n, long long* unique_out = nullptr,
                  long long* total_out = nullptr);

MetricsReport evaluate_model(const PhredModel& model, const std::vector<Dialogue>& eval_set,
                             const std::vector<TokenSeq>& hypotheses,
                             const std::vector<TokenSeq>& references, std::uint64_t seed = 1);

}  // namespace phredgan
