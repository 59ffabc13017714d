// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference metrics for oracle tests. Deliberately written
// with a different representation (joined-string n-grams, hash maps) so
// they share no code with the library implementations.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace metrics_reference {

using TokenSeq = std::vector<std::string>;

inline std::vector<std::string> grams(const TokenSeq& seq, int n) {
  std::vector<std::string> out;
  for (int i = 0; i + n <= static_cast<int>(seq.size()); ++i) {
    std::string g;
    for (int j = 0; j < n; ++j) g += seq[i + j] + "\x1f";
    out.push_back(g);
  }
  return out;
}

inline std::unordered_map<std::string, int> bag(const std::vector<std::string>& grams) {
  std::unordered_map<std::string, int> out;
  for (const auto& g : grams) ++out[g];
  return out;
}

inline double bleu4(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  long long match[5] = {0}, total[5] = {0};
  long long c = 0, r = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    c += static_cast<long long>(hyps[i].size());
    r += static_cast<long long>(refs[i].size());
    for (int n = 1; n <= 4; ++n) {
      auto hb = bag(grams(hyps[i], n));
      auto rb = bag(grams(refs[i], n));
      for (auto& [g, cnt] : hb) {
        total[n] += cnt;
        auto it = rb.find(g);
        if (it != rb.end()) match[n] += std::min(cnt, it->second);
      }
    }
  }
  if (match[1] == 0) return 0.0;
  bool smooth = match[2] == 0 || match[3] == 0 || match[4] == 0;
  double acc = 0.0;
  for (int n = 1; n <= 4; ++n) {
    double num = match[n], den = total[n];
    if (n >= 2 && smooth) {
      num += 1;
      den += 1;
    }
    acc += 0.25 * std::log(num / den);
  }
  double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
  return bp * std::exp(acc);
}

inline double rouge2(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
  double acc = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    auto hb = bag(grams(hyps[i], 2));
    auto rb = bag(grams(refs[i], 2));
    long long overlap = 0, ht = 0, rt = 0;
    for (auto& [g, cnt] : hb) ht += cnt;
    for (auto& [g, cnt] : rb) rt += cnt;
    for (auto& [g, cnt] : hb)
      if (rb.count(g)) overlap += std::min(cnt, rb[g]);
    if (ht > 0 && rt > 0 && overlap > 0) {
      double p = double(overlap) / ht, r = double(overlap) / rt;
      acc += 2 * p * r / (p + r);
    }
  }
  return acc / hyps.size();
}

inline double distinct(const std::vector<TokenSeq>& hyps, int n) {
  std::unordered_set<std::string> unique;
  long long total = 0;
  for (const auto& h : hyps)
    for (const auto& g : grams(h, n)) {
      unique.insert(g);
      ++total;
    }
  return total == 0 ? 0.0 : double(unique.size()) / total;
}

}  // namespace metrics_reference
