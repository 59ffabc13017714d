// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion, vocabulary construction, batching, and the synthetic
// persona corpus used for desk-scale verification. Corpus files are JSONL,
// one dialogue per line: {"turns":[{"speaker": str, "text": str}, ...]}.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace phredgan {

// lowercase, whitespace-split, punctuation as separate tokens; idempotent
// over its own space-joined output
std::vector<std::string> tokenize(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;

  Vocab();
  int size() const { return static_cast<int>(id_to_token_.size()); }

  int encode_token(const std::string& token) const;
  // token ids; EOS is appended by the dialogue encoder, not here
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  const std::string& token(int id) const;
  // drops PAD/EOS, renders UNK as the literal "UNK"
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  std::uint64_t hash() const;
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  // top (max_size - 3) tokens by frequency, ties broken lexicographically
  static Vocab build(const std::vector<std::vector<std::string>>& utterances, int max_size);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  void index();
};

class AttributeVocab {
 public:
  AttributeVocab() = default;
  explicit AttributeVocab(std::vector<std::string> names);  // sorted, deduplicated

  int size() const { return static_cast<int>(names_.size()); }
  // closed world: unknown speakers are errors
  int id_of(const std::string& name) const;
  std::optional<int> find(const std::string& name) const;
  const std::string& name(int id) const { return names_[id]; }
  const std::vector<std::string>& names() const { return names_; }

  std::uint64_t hash() const;
  void save(const std::string& path) const;
  static AttributeVocab load(const std::string& path);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

struct RawTurn {
  std::string speaker;
  std::vector<std::string> tokens;
};

struct RawDialogue {
  std::vector<RawTurn> turns;
};

struct Turn {
  std::vector<int> tokens;  // ends with EOS
  int attribute = 0;
};

struct Dialogue {
  std::vector<Turn> turns;
};

// Drops dialogues with fewer than two turns with a warning on stderr;
// malformed lines raise with their line number.
std::vector<RawDialogue> load_corpus_jsonl(const std::string& path);
void save_corpus_jsonl(const std::vector<RawDialogue>& dialogues, const std::string& path);

AttributeVocab build_attribute_vocab(const std::vector<RawDialogue>& corpus);
Vocab build_vocab(const std::vector<RawDialogue>& corpus, int max_size);

Dialogue encode_dialogue(const RawDialogue& raw, const Vocab& vocab, const AttributeVocab& attrs);
std::vector<Dialogue> encode_corpus(const std::vector<RawDialogue>& corpus, const Vocab& vocab,
                                    const AttributeVocab& attrs);

// Turn t of every dialogue in a batch padded to a common width, with masks.
struct PaddedTurn {
  std::vector<std::vector<int>> tokens;  // row per dialogue, PAD-filled
  std::vector<std::vector<bool>> mask;   // true on real tokens
  std::vector<int> lengths;
  std::vector<int> attributes;
};

struct Batch {
  std::vector<Dialogue> dialogues;
  std::vector<PaddedTurn> turns;  // indexed by turn; rows only for dialogues long enough
  std::vector<std::vector<int>> turn_members;  // dialogue indices present per turn
};

std::vector<Batch> batch_and_pad(const std::vector<Dialogue>& dialogues, int batch_size);

// Synthetic persona corpus: personas carry pairwise-disjoint style token
// sets and deterministic response templates keyed to the dialogue topic,
// so a rule-based style classifier can decide the true persona of every
// generated line.
struct SynthSpec {
  int personas = 2;
  int vocab_size = 96;
  int dialogues = 200;
  int turns = 4;
  std::uint64_t seed = 1;
};

struct SynthRules {
  std::vector<std::vector<std::string>> style_tokens;  // per persona
  std::vector<std::string> topics;
};

SynthRules rules_for(const SynthSpec& spec);

struct SynthCorpus {
  std::vector<RawDialogue> train, dev, test;
  SynthRules rules;
};

SynthCorpus generate_synthetic(const SynthSpec& spec);
// writes corpus.train / corpus.dev / corpus.test under dir
void write_synthetic(const SynthCorpus& corpus, const std::string& dir);

// -1 when no persona's style tokens appear (or on a tie)
int classify_persona(const std::vector<std::string>& tokens, const SynthRules& rules);

}  // namespace phredgan
