#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unmtlab/common.hpp"

namespace unmtlab {

// Sentence templates are slot sequences over word categories plus an anchor
// slot. Anchors are tokens shared verbatim by both languages (digits and
// punctuation analogue) and supply the initial cross-lingual signal.
enum class SlotKind : int { Noun = 0, Verb = 1, Adj = 2, Adv = 3, Anchor = 4 };
using SentenceTemplate = std::vector<SlotKind>;

std::string template_to_string(const SentenceTemplate& t);
SentenceTemplate template_from_string(const std::string& s);
std::vector<SentenceTemplate> default_templates();

struct LanguagePairSpec {
  // Default world size keeps the lexicon small enough that unsupervised
  // training can identify it from desk-scale corpora.
  int content_vocab_size = 24;  // content words per language
  int anchor_vocab_size = 12;   // tokens shared verbatim between languages
  int reorder_window = 2;       // max local displacement of the reorder rule
  std::vector<SentenceTemplate> grammar_templates = default_templates();
  int max_sentence_len = 14;
  uint64_t seed = 1;

  void validate() const;  // throws ValidationError naming the field
  std::string to_json() const;
  static LanguagePairSpec from_json(const std::string& text);
};

enum class Direction { L1ToL2, L2ToL1 };

// A deterministic bilingual world: bijective lexicon over content words,
// self-mapped anchors, and a length-local invertible reordering rule. Every
// sentence has an exact reference translation via oracle_translate.
struct LanguagePair {
  LanguagePairSpec spec;
  std::vector<std::string> l1_words;  // content words, category-blocked
  std::vector<std::string> l2_words;  // l1_words[i] maps to l2_words[i]
  std::vector<std::string> anchors;
  // category c occupies indices [category_offsets[c], category_offsets[c+1])
  std::array<int, 5> category_offsets{};

  bool is_l1_token(const std::string& tok) const;
  bool is_l2_token(const std::string& tok) const;
  bool is_anchor(const std::string& tok) const;

  std::string to_json() const;
  static LanguagePair from_json(const std::string& text);
};

LanguagePair generate_language_pair(const LanguagePairSpec& spec);

// Word-for-word lexicon image composed with the reorder permutation.
// The reorder rule is a self-inverse block permutation, so applying the
// opposite direction inverts the translation exactly.
RawSentence oracle_translate(const LanguagePair& pair, const RawSentence& sentence,
                             Direction direction);

// Positions after reordering: output[i] = input[reorder_permutation(n)[i]].
std::vector<size_t> reorder_permutation(size_t sentence_len, int window);

struct TextCorpus {
  LangId lang = LangId::L1;
  std::vector<RawSentence> sentences;
  std::vector<uint64_t> ids;  // generation pool ids, unique across corpora
};

struct TextParallelCorpus {
  std::vector<std::pair<RawSentence, RawSentence>> pairs;  // (L1, L2)
  std::vector<uint64_t> ids;
};

struct GeneratedCorpora {
  TextCorpus x;              // L1 monolingual training side
  TextCorpus y;              // L2 monolingual training side
  TextParallelCorpus test;   // held-out reference pairs
};

// Draws X, Y and the test set from pairwise-disjoint sentence pools so no
// hidden parallelism links the training sides. Duplicates within one corpus
// are capped at 5%; exceeding grammar capacity raises CapacityError.
GeneratedCorpora generate_corpora(const LanguagePair& pair, size_t n_x, size_t n_y,
                                  size_t n_test, uint64_t seed);

void save_text_corpus(const TextCorpus& corpus, const std::string& path);
std::vector<RawSentence> load_sentences(const std::string& path);

}  // namespace unmtlab
