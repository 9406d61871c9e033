#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "unmtlab/common.hpp"
#include "unmtlab/toylang.hpp"

namespace unmtlab {

// Shared vocabulary over both languages. Ids 0..5 are reserved and fixed.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kTagL1 = 4;
  static constexpr TokenId kTagL2 = 5;
  static constexpr TokenId kNumReserved = 6;

  Vocab();

  TokenId add(const std::string& token);  // throws on duplicates
  TokenId id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(TokenId id) const;
  TokenId lang_tag(LangId lang) const { return lang == LangId::L1 ? kTagL1 : kTagL2; }
  size_t size() const { return id_to_token_.size(); }

  Sentence encode(const RawSentence& raw) const;
  RawSentence decode(const Sentence& ids) const;  // skips reserved tokens

  void save(const std::string& path) const;  // one token per line, id order
  static Vocab load(const std::string& path);

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// Deterministic ordering: descending frequency, ties broken lexicographically.
Vocab build_vocab(const std::vector<const TextCorpus*>& corpora);

// Closed vocabulary straight from the bilingual world (both word lists plus
// anchors, in their stored order); corpus-independent, so every reference
// translation is always representable.
Vocab vocab_from_pair(const LanguagePair& pair);

enum class Origin { Natural, Synthetic, Reference };

struct MonoCorpus {
  LangId lang = LangId::L1;
  std::vector<Sentence> sentences;
  Origin origin = Origin::Natural;

  void validate(size_t vocab_size) const;
};

struct ParallelCorpus {
  LangId src_lang = LangId::L1;
  LangId tgt_lang = LangId::L2;
  std::vector<std::pair<Sentence, Sentence>> pairs;
  Origin origin = Origin::Reference;

  void validate(size_t vocab_size) const;
};

MonoCorpus encode_corpus(const Vocab& vocab, const TextCorpus& text,
                         Origin origin = Origin::Natural);

// Keeps exactly the sentences of length <= max_len, order preserved.
MonoCorpus clean(const MonoCorpus& corpus, int max_len = 50);

// Uniform sample without replacement of round(epsilon*|corpus|) sentences
// (half-up, floor of one). Original relative order is preserved, so
// epsilon=1 returns an identical copy. `picked`, when given, receives the
// selected indices.
MonoCorpus subsample(const MonoCorpus& corpus, double epsilon, uint64_t seed,
                     std::vector<size_t>* picked = nullptr);

struct MonoBatch {
  std::vector<Sentence> sentences;
  std::vector<size_t> indices;  // positions in the source corpus
};

struct ParallelBatch {
  std::vector<std::pair<Sentence, Sentence>> pairs;
  std::vector<size_t> indices;
};

// One epoch of batches: every sentence exactly once, seed-deterministic
// shuffle, padded token count per batch <= batch_size_tokens.
std::vector<MonoBatch> batch_iter(const MonoCorpus& corpus, int batch_size_tokens,
                                  uint64_t seed);
std::vector<ParallelBatch> batch_iter(const ParallelCorpus& corpus, int batch_size_tokens,
                                      uint64_t seed);

}  // namespace unmtlab
