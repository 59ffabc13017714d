// SPDX-License-Identifier: Apache-2.0

#include "phredgan/data.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "phredgan/rng.hpp"

namespace phredgan {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocab::Vocab() {
  id_to_token_ = {"PAD", "UNK", "EOS"};
  index();
}

void Vocab::index() {
  token_to_id_.clear();
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) token_to_id_[id_to_token_[i]] = static_cast<int>(i);
}

int Vocab::encode_token(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(encode_token(t));
  return ids;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
  return id_to_token_[id];
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id == kPad || id == kEos) continue;
    out.push_back(token(id));
  }
  return out;
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (const auto& t : id_to_token_) {
    for (char c : t) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("vocab: cannot write " + path);
  for (const auto& t : id_to_token_) f << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("vocab: cannot read " + path);
  Vocab v;
  v.id_to_token_.clear();
  std::string line;
  while (std::getline(f, line)) v.id_to_token_.push_back(line);
  if (v.id_to_token_.size() < 3 || v.id_to_token_[0] != "PAD" || v.id_to_token_[1] != "UNK" ||
      v.id_to_token_[2] != "EOS")
    throw std::runtime_error("vocab: " + path + " is missing the reserved PAD/UNK/EOS header");
  v.index();
  return v;
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& utterances, int max_size) {
  if (max_size < 4) throw std::invalid_argument("vocab: max size must leave room beyond PAD/UNK/EOS");
  std::map<std::string, long long> counts;
  for (const auto& utt : utterances)
    for (const auto& tok : utt) ++counts[tok];
  std::vector<std::pair<std::string, long long>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  int budget = max_size - 3;
  for (const auto& [tok, cnt] : entries) {
    if (budget == 0) break;
    v.id_to_token_.push_back(tok);
    --budget;
  }
  v.index();
  return v;
}

AttributeVocab::AttributeVocab(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  names_ = std::move(names);
  for (std::size_t i = 0; i < names_.size(); ++i) ids_[names_[i]] = static_cast<int>(i);
}

int AttributeVocab::id_of(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) {
    std::string valid;
    for (const auto& n : names_) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown speaker '" + name + "'; known speakers: " + valid);
  }
  return it->second;
}

std::optional<int> AttributeVocab::find(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t AttributeVocab::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : names_) {
    for (char c : t) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= 0xfe;
    h *= 1099511628211ULL;
  }
  return h;
}

void AttributeVocab::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("attributes: cannot write " + path);
  for (const auto& n : names_) f << n << '\n';
}

AttributeVocab AttributeVocab::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("attributes: cannot read " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) names.push_back(line);
  return AttributeVocab(std::move(names));
}

std::vector<RawDialogue> load_corpus_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("corpus: cannot read " + path);
  std::vector<RawDialogue> out;
  std::string line;
  int lineno = 0;
  int dropped = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("turns") || !doc["turns"].is_array())
      throw std::runtime_error(path + " line " + std::to_string(lineno) +
                               ": expected {\"turns\": [...]}");
    RawDialogue d;
    for (const auto& t : doc["turns"]) {
      if (!t.is_object() || !t.contains("text") || !t["text"].is_string())
        throw std::runtime_error(path + " line " + std::to_string(lineno) +
                                 ": turn needs a string field 'text'");
      std::string speaker;
      if (t.contains("speaker")) {
        if (!t["speaker"].is_string())
          throw std::runtime_error(path + " line " + std::to_string(lineno) +
                                   ": 'speaker' must be a string");
        speaker = t["speaker"].get<std::string>();
      } else {
        // unlabeled corpora alternate two roles, first utterance asking
        speaker = d.turns.size() % 2 == 0 ? "questioner" : "helper";
      }
      d.turns.push_back({std::move(speaker), tokenize(t["text"].get<std::string>())});
    }
    if (d.turns.size() < 2) {
      ++dropped;
      continue;
    }
    out.push_back(std::move(d));
  }
  if (dropped > 0)
    std::cerr << "warning: " << path << ": dropped " << dropped << " dialogue(s) with fewer than 2 turns\n";
  return out;
}

void save_corpus_jsonl(const std::vector<RawDialogue>& dialogues, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("corpus: cannot write " + path);
  for (const auto& d : dialogues) {
    json turns = json::array();
    for (const auto& t : d.turns) turns.push_back({{"speaker", t.speaker}, {"text", join_tokens(t.tokens)}});
    f << json{{"turns", turns}}.dump() << '\n';
  }
}

AttributeVocab build_attribute_vocab(const std::vector<RawDialogue>& corpus) {
  std::vector<std::string> names;
  for (const auto& d : corpus)
    for (const auto& t : d.turns) names.push_back(t.speaker);
  return AttributeVocab(std::move(names));
}

Vocab build_vocab(const std::vector<RawDialogue>& corpus, int max_size) {
  std::vector<std::vector<std::string>> utterances;
  for (const auto& d : corpus)
    for (const auto& t : d.turns) utterances.push_back(t.tokens);
  if (utterances.empty()) throw std::invalid_argument("vocab: empty corpus");
  return Vocab::build(utterances, max_size);
}

Dialogue encode_dialogue(const RawDialogue& raw, const Vocab& vocab, const AttributeVocab& attrs) {
  Dialogue d;
  for (const auto& t : raw.turns) {
    Turn turn;
    turn.tokens = vocab.encode(t.tokens);
    turn.tokens.push_back(Vocab::kEos);
    turn.attribute = attrs.id_of(t.speaker);
    d.turns.push_back(std::move(turn));
  }
  return d;
}

std::vector<Dialogue> encode_corpus(const std::vector<RawDialogue>& corpus, const Vocab& vocab,
                                    const AttributeVocab& attrs) {
  std::vector<Dialogue> out;
  out.reserve(corpus.size());
  for (const auto& d : corpus) out.push_back(encode_dialogue(d, vocab, attrs));
  return out;
}

std::vector<Batch> batch_and_pad(const std::vector<Dialogue>& dialogues, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch: size must be >= 1");
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < dialogues.size(); start += batch_size) {
    Batch b;
    std::size_t end = std::min(dialogues.size(), start + batch_size);
    b.dialogues.assign(dialogues.begin() + start, dialogues.begin() + end);
    std::size_t max_turns = 0;
    for (const auto& d : b.dialogues) max_turns = std::max(max_turns, d.turns.size());
    b.turns.resize(max_turns);
    b.turn_members.resize(max_turns);
    for (std::size_t t = 0; t < max_turns; ++t) {
      PaddedTurn& pt = b.turns[t];
      int width = 0;
      for (std::size_t i = 0; i < b.dialogues.size(); ++i)
        if (t < b.dialogues[i].turns.size())
          width = std::max(width, static_cast<int>(b.dialogues[i].turns[t].tokens.size()));
      for (std::size_t i = 0; i < b.dialogues.size(); ++i) {
        if (t >= b.dialogues[i].turns.size()) continue;
        const Turn& turn = b.dialogues[i].turns[t];
        b.turn_members[t].push_back(static_cast<int>(i));
        std::vector<int> row(width, Vocab::kPad);
        std::vector<bool> mask(width, false);
        for (std::size_t j = 0; j < turn.tokens.size(); ++j) {
          row[j] = turn.tokens[j];
          mask[j] = true;
        }
        pt.tokens.push_back(std::move(row));
        pt.mask.push_back(std::move(mask));
        pt.lengths.push_back(static_cast<int>(turn.tokens.size()));
        pt.attributes.push_back(turn.attribute);
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {

const std::vector<std::string> kFiller = {
    "what", "is",    "wrong",   "with", "my",  "why",  "the",  "not",   "working", "how",
    "do",   "i",     "fix",     "check", "cable", "and", "restart", "it", "needs", "a",
    "now",  "try",   "turning", "off",  "on",  "ok",   "works", "thanks", "still", "broken",
    "else", "should", "that",   "fixed", "?",  "."};

const std::vector<std::vector<std::string>> kStyleBanks = {
    {"please", "kindly", "hmm", "oh", "dear", "wondering"},
    {"simply", "basically", "typically", "just", "straightforward", "usually"},
    {"mate", "reckon", "gonna", "heaps", "keen", "righto"},
    {"indeed", "precisely", "certainly", "formally", "moreover", "accordingly"}};

const std::vector<std::string> kTopicBank = {
    "printer", "kernel", "monitor",  "router", "battery", "driver",  "screen",
    "keyboard", "laptop", "server",  "modem",  "charger", "camera",  "sensor",
    "speaker", "disk",    "antenna", "tablet", "phone",   "console"};

std::vector<std::string> style_tokens_for(int persona) {
  if (persona < static_cast<int>(kStyleBanks.size())) return kStyleBanks[persona];
  std::vector<std::string> out;
  for (char suffix : {'a', 'b', 'c', 'd', 'e', 'f'})
    out.push_back("style" + std::to_string(persona) + std::string(1, suffix));
  return out;
}

std::vector<std::string> expand(std::initializer_list<const char*> words, const std::string& style,
                                const std::string& topic) {
  std::vector<std::string> out;
  for (const char* w : words) {
    if (std::string(w) == "%S")
      out.push_back(style);
    else if (std::string(w) == "%T")
      out.push_back(topic);
    else
      out.push_back(w);
  }
  return out;
}

std::vector<std::string> question_line(const std::vector<std::string>& style,
                                       const std::string& topic, int variant) {
  switch (variant % 3) {
    case 0: return expand({"%S", "what", "is", "wrong", "with", "my", "%T", "?"}, style[0], topic);
    case 1: return expand({"%S", "why", "is", "the", "%T", "not", "working", "?"}, style[1], topic);
    default: return expand({"%S", "how", "do", "i", "fix", "the", "%T", "?"}, style[2], topic);
  }
}

std::vector<std::string> reply_line(const std::vector<std::string>& style, const std::string& topic,
                                    int variant) {
  switch (variant % 3) {
    case 0: return expand({"%S", "check", "the", "%T", "cable", "and", "restart", "it", "."}, style[3], topic);
    case 1: return expand({"%S", "the", "%T", "needs", "a", "restart", "now", "."}, style[4], topic);
    default: return expand({"%S", "try", "turning", "the", "%T", "off", "and", "on", "."}, style[5], topic);
  }
}

std::vector<std::string> followup_line(const std::vector<std::string>& style,
                                       const std::string& topic, int variant) {
  switch (variant % 3) {
    case 0: return expand({"%S", "ok", "the", "%T", "works", "now", "thanks", "."}, style[0], topic);
    case 1: return expand({"%S", "still", "broken", "what", "else", "should", "i", "check", "?"}, style[1], topic);
    default: return expand({"%S", "that", "fixed", "my", "%T", "thanks", "."}, style[2], topic);
  }
}

}  // namespace

SynthRules rules_for(const SynthSpec& spec) {
  if (spec.personas < 2) throw std::invalid_argument("synth: need at least 2 personas");
  if (spec.dialogues < 1) throw std::invalid_argument("synth: need at least 1 dialogue");
  if (spec.turns < 2) throw std::invalid_argument("synth: need at least 2 turns per dialogue");
  SynthRules rules;
  std::set<std::string> seen(kFiller.begin(), kFiller.end());
  for (int p = 0; p < spec.personas; ++p) {
    auto style = style_tokens_for(p);
    for (const auto& tok : style)
      if (!seen.insert(tok).second)
        throw std::logic_error("synth: style token '" + tok + "' is not disjoint");
    rules.style_tokens.push_back(std::move(style));
  }
  int fixed = 3 + static_cast<int>(seen.size());
  int topic_budget = spec.vocab_size - fixed;
  if (topic_budget < 4)
    throw std::invalid_argument("synth: vocab size " + std::to_string(spec.vocab_size) +
                                " too small for " + std::to_string(spec.personas) +
                                " disjoint persona styles; need at least " + std::to_string(fixed + 4));
  int n_topics = std::min<int>(topic_budget, static_cast<int>(kTopicBank.size()));
  rules.topics.assign(kTopicBank.begin(), kTopicBank.begin() + n_topics);
  return rules;
}

SynthCorpus generate_synthetic(const SynthSpec& spec) {
  SynthCorpus corpus;
  corpus.rules = rules_for(spec);
  Rng rng(Rng::derive(spec.seed, 0x5e17));

  std::vector<RawDialogue> all;
  all.reserve(spec.dialogues);
  for (int d = 0; d < spec.dialogues; ++d) {
    int topic_idx = rng.uniform_int(static_cast<int>(corpus.rules.topics.size()));
    const std::string& topic = corpus.rules.topics[topic_idx];
    RawDialogue dlg;
    int asker = rng.uniform_int(spec.personas);
    for (int t = 0; t < spec.turns; ++t) {
      int speaker = t == 0 ? asker : rng.uniform_int(spec.personas);
      const auto& style = corpus.rules.style_tokens[speaker];
      int variant = topic_idx + t;
      std::vector<std::string> text;
      if (t == 0)
        text = question_line(style, topic, variant);
      else if (t % 2 == 1)
        text = reply_line(style, topic, variant);
      else
        text = followup_line(style, topic, variant);
      dlg.turns.push_back({"persona" + std::to_string(speaker), std::move(text)});
    }
    all.push_back(std::move(dlg));
  }

  // 94 / 3 / 3 split, each part nonempty when the corpus allows it
  int n = static_cast<int>(all.size());
  int n_train = static_cast<int>(n * 0.94);
  int n_dev = static_cast<int>(n * 0.03);
  if (n >= 3) {
    n_dev = std::max(n_dev, 1);
    if (n - n_train - n_dev < 1) n_train = n - n_dev - 1;
  }
  int n_test = n - n_train - n_dev;
  corpus.train.assign(all.begin(), all.begin() + n_train);
  corpus.dev.assign(all.begin() + n_train, all.begin() + n_train + n_dev);
  corpus.test.assign(all.begin() + n_train + n_dev, all.begin() + n_train + n_dev + n_test);
  return corpus;
}

void write_synthetic(const SynthCorpus& corpus, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_corpus_jsonl(corpus.train, dir + "/corpus.train");
  save_corpus_jsonl(corpus.dev, dir + "/corpus.dev");
  save_corpus_jsonl(corpus.test, dir + "/corpus.test");
  json rules;
  rules["style_tokens"] = corpus.rules.style_tokens;
  rules["topics"] = corpus.rules.topics;
  std::ofstream f(dir + "/rules.json");
  if (!f) throw std::runtime_error("synth: cannot write " + dir + "/rules.json");
  f << rules.dump(2) << '\n';
}

int classify_persona(const std::vector<std::string>& tokens, const SynthRules& rules) {
  int best = -1;
  long long best_count = 0;
  bool tie = false;
  for (std::size_t p = 0; p < rules.style_tokens.size(); ++p) {
    long long count = 0;
    for (const auto& tok : tokens)
      for (const auto& style : rules.style_tokens[p])
        if (tok == style) ++count;
    if (count > best_count) {
      best = static_cast<int>(p);
      best_count = count;
      tie = false;
    } else if (count == best_count && count > 0) {
      tie = true;
    }
  }
  if (best_count == 0 || tie) return -1;
  return best;
}

}  // namespace phredgan
