#include "unmtlab/toylang.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace unmtlab {

namespace {

constexpr int kNumCategories = 4;  // Noun, Verb, Adj, Adv

const char* slot_letter(SlotKind k) {
  switch (k) {
    case SlotKind::Noun: return "N";
    case SlotKind::Verb: return "V";
    case SlotKind::Adj: return "J";
    case SlotKind::Adv: return "D";
    case SlotKind::Anchor: return "A";
  }
  return "?";
}

SlotKind slot_from_letter(const std::string& s) {
  if (s == "N") return SlotKind::Noun;
  if (s == "V") return SlotKind::Verb;
  if (s == "J") return SlotKind::Adj;
  if (s == "D") return SlotKind::Adv;
  if (s == "A") return SlotKind::Anchor;
  throw ValidationError("grammar_templates: unknown slot letter '" + s + "'");
}

std::string make_pseudoword(Rng& rng, bool second_language) {
  static const std::vector<std::string> c1 = {"b", "d", "f", "g", "k", "l",
                                              "m", "n", "p", "r", "s", "t"};
  static const std::vector<std::string> v1 = {"a", "e", "i", "o", "u"};
  static const std::vector<std::string> c2 = {"ch", "sh", "th", "v", "w", "x",
                                              "y",  "z",  "h",  "j", "q", "c"};
  static const std::vector<std::string> v2 = {"aa", "ee", "ii", "oo", "uu", "ai", "ou"};
  const auto& cons = second_language ? c2 : c1;
  const auto& vows = second_language ? v2 : v1;
  int syllables = static_cast<int>(rng.uniform_int(2, 3));
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += cons[rng.index(cons.size())];
    w += vows[rng.index(vows.size())];
  }
  return w;
}

std::string make_anchor(int i) {
  static const std::vector<std::string> punct = {".", ",", "!", "?", ";",  ":", "-",
                                                 "%", "&", "+", "=", "\"", "/", "'"};
  if (i < 10) return std::to_string(i);
  if (i < 10 + static_cast<int>(punct.size())) return punct[i - 10];
  return std::to_string(i);  // multi-digit numerals beyond the symbol pool
}

size_t category_of_slot(SlotKind k) { return static_cast<size_t>(k); }

}  // namespace

std::string template_to_string(const SentenceTemplate& t) {
  std::string out;
  for (size_t i = 0; i < t.size(); ++i) {
    if (i) out += ' ';
    out += slot_letter(t[i]);
  }
  return out;
}

SentenceTemplate template_from_string(const std::string& s) {
  SentenceTemplate t;
  for (const auto& tok : split_tokens(s)) t.push_back(slot_from_letter(tok));
  return t;
}

std::vector<SentenceTemplate> default_templates() {
  // Short clause patterns with at least one anchor each; lengths 5..10 so
  // 4-gram BLEU stays informative on every test sentence.
  static const std::vector<std::string> defs = {
      "N V J N A",       "J N V N A",       "N V N A D",     "D N V J N A",
      "N A V N D",       "J N V A J N",     "N V N A N V D", "N V J N A D N",
      "J N A V N D J N", "N V N A J N V N D",
  };
  std::vector<SentenceTemplate> out;
  for (const auto& d : defs) out.push_back(template_from_string(d));
  return out;
}

void LanguagePairSpec::validate() const {
  if (content_vocab_size < 10) {
    throw ValidationError("content_vocab_size must be >= 10, got " +
                          std::to_string(content_vocab_size));
  }
  if (anchor_vocab_size < 1) {
    throw ValidationError("anchor_vocab_size must be >= 1, got " +
                          std::to_string(anchor_vocab_size));
  }
  if (reorder_window < 0) {
    throw ValidationError("reorder_window must be >= 0, got " + std::to_string(reorder_window));
  }
  if (max_sentence_len < 1 || max_sentence_len > 50) {
    throw ValidationError("max_sentence_len must be in [1, 50], got " +
                          std::to_string(max_sentence_len));
  }
  if (grammar_templates.empty()) {
    throw ValidationError("grammar_templates must be non-empty");
  }
  for (const auto& t : grammar_templates) {
    if (t.empty()) throw ValidationError("grammar_templates: empty template");
    if (static_cast<int>(t.size()) > max_sentence_len) {
      throw ValidationError("grammar_templates: template '" + template_to_string(t) +
                            "' longer than max_sentence_len " + std::to_string(max_sentence_len));
    }
    if (std::none_of(t.begin(), t.end(), [](SlotKind k) { return k == SlotKind::Anchor; })) {
      throw ValidationError("grammar_templates: template '" + template_to_string(t) +
                            "' has no anchor slot");
    }
  }
}

bool LanguagePair::is_anchor(const std::string& tok) const {
  return std::find(anchors.begin(), anchors.end(), tok) != anchors.end();
}
bool LanguagePair::is_l1_token(const std::string& tok) const {
  return is_anchor(tok) ||
         std::find(l1_words.begin(), l1_words.end(), tok) != l1_words.end();
}
bool LanguagePair::is_l2_token(const std::string& tok) const {
  return is_anchor(tok) ||
         std::find(l2_words.begin(), l2_words.end(), tok) != l2_words.end();
}

LanguagePair generate_language_pair(const LanguagePairSpec& spec) {
  spec.validate();
  Rng rng(Rng::derive(spec.seed, "language_pair"));

  LanguagePair pair;
  pair.spec = spec;

  // category sizes: nouns 40%, verbs 25%, adjectives 20%, adverbs remainder
  const int n = spec.content_vocab_size;
  std::array<int, kNumCategories> sizes{};
  sizes[0] = std::max(1, (n * 40) / 100);
  sizes[1] = std::max(1, (n * 25) / 100);
  sizes[2] = std::max(1, (n * 20) / 100);
  sizes[3] = n - sizes[0] - sizes[1] - sizes[2];
  if (sizes[3] < 1) {
    sizes[3] = 1;
    sizes[0] = n - sizes[1] - sizes[2] - sizes[3];
  }
  pair.category_offsets[0] = 0;
  for (int c = 0; c < kNumCategories; ++c) {
    pair.category_offsets[c + 1] = pair.category_offsets[c] + sizes[c];
  }

  std::unordered_set<std::string> used;
  auto fresh_word = [&](bool second) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      std::string w = make_pseudoword(rng, second);
      if (used.insert(w).second) return w;
    }
    throw CapacityError("content_vocab_size: pseudoword space exhausted");
  };
  for (int i = 0; i < n; ++i) pair.l1_words.push_back(fresh_word(false));
  for (int i = 0; i < n; ++i) pair.l2_words.push_back(fresh_word(true));
  for (int i = 0; i < spec.anchor_vocab_size; ++i) pair.anchors.push_back(make_anchor(i));
  return pair;
}

std::vector<size_t> reorder_permutation(size_t sentence_len, int window) {
  // Reverse consecutive blocks of window+1 positions. Each block reversal is
  // its own inverse and displaces a token by at most `window`.
  std::vector<size_t> perm(sentence_len);
  for (size_t i = 0; i < sentence_len; ++i) perm[i] = i;
  if (window <= 0) return perm;
  const size_t block = static_cast<size_t>(window) + 1;
  for (size_t start = 0; start < sentence_len; start += block) {
    size_t end = std::min(start + block, sentence_len);
    std::reverse(perm.begin() + start, perm.begin() + end);
  }
  return perm;
}

RawSentence oracle_translate(const LanguagePair& pair, const RawSentence& sentence,
                             Direction direction) {
  const auto& src_words = direction == Direction::L1ToL2 ? pair.l1_words : pair.l2_words;
  const auto& dst_words = direction == Direction::L1ToL2 ? pair.l2_words : pair.l1_words;

  RawSentence mapped;
  mapped.reserve(sentence.size());
  for (const auto& tok : sentence) {
    if (pair.is_anchor(tok)) {
      mapped.push_back(tok);
      continue;
    }
    auto it = std::find(src_words.begin(), src_words.end(), tok);
    if (it == src_words.end()) {
      throw ValidationError("oracle_translate: token '" + tok +
                            "' is not in the source-side vocabulary");
    }
    mapped.push_back(dst_words[static_cast<size_t>(it - src_words.begin())]);
  }

  auto perm = reorder_permutation(mapped.size(), pair.spec.reorder_window);
  RawSentence out(mapped.size());
  for (size_t i = 0; i < mapped.size(); ++i) out[i] = mapped[perm[i]];
  return out;
}

namespace {

double grammar_capacity(const LanguagePair& pair) {
  double total = 0.0;
  for (const auto& t : pair.spec.grammar_templates) {
    double combos = 1.0;
    for (SlotKind k : t) {
      size_t size = k == SlotKind::Anchor
                        ? pair.anchors.size()
                        : static_cast<size_t>(pair.category_offsets[category_of_slot(k) + 1] -
                                              pair.category_offsets[category_of_slot(k)]);
      combos *= static_cast<double>(size);
      if (combos > 1e18) return 1e18;
    }
    total += combos;
    if (total > 1e18) return 1e18;
  }
  return total;
}

// Word frequencies within a category follow a Zipf-like law, and anchor slots
// prefer the anchor affiliated with the latest content word. Both give each
// word a distributional signature (frequency rank + anchor company) that
// survives translation, the way real words keep their statistics across
// languages. Without such signatures, same-category words are statistically
// interchangeable and no monolingual learner could pin down the lexicon.
constexpr double kZipfExponent = 1.0;
constexpr double kAnchorAffinity = 0.6;

int zipf_pick(Rng& rng, int n) {
  double total = 0.0;
  for (int r = 0; r < n; ++r) total += 1.0 / std::pow(r + 1.0, kZipfExponent);
  double u = rng.uniform() * total;
  double cum = 0.0;
  for (int r = 0; r < n; ++r) {
    cum += 1.0 / std::pow(r + 1.0, kZipfExponent);
    if (u < cum) return r;
  }
  return n - 1;
}

RawSentence render_sentence(const LanguagePair& pair, Rng& rng) {
  const auto& templates = pair.spec.grammar_templates;
  const auto& t = templates[rng.index(templates.size())];
  RawSentence s;
  s.reserve(t.size());
  int last_word = -1;  // global index of the latest content word
  for (SlotKind k : t) {
    if (k == SlotKind::Anchor) {
      if (last_word >= 0 && rng.uniform() < kAnchorAffinity) {
        s.push_back(pair.anchors[static_cast<size_t>(last_word) % pair.anchors.size()]);
      } else {
        s.push_back(pair.anchors[rng.index(pair.anchors.size())]);
      }
    } else {
      size_t c = category_of_slot(k);
      int lo = pair.category_offsets[c];
      int hi = pair.category_offsets[c + 1];
      int idx = lo + zipf_pick(rng, hi - lo);
      last_word = idx;
      s.push_back(pair.l1_words[static_cast<size_t>(idx)]);
    }
  }
  return s;
}

}  // namespace

GeneratedCorpora generate_corpora(const LanguagePair& pair, size_t n_x, size_t n_y,
                                  size_t n_test, uint64_t seed) {
  if (n_x < 1 || n_y < 1 || n_test < 1) {
    throw ValidationError("generate_corpora: corpus sizes must be >= 1");
  }

  const double capacity = grammar_capacity(pair);
  const size_t dup_cap = n_x / 20 + n_y / 20 + n_test / 20;  // 5% per corpus
  if (static_cast<double>(n_x + n_y + n_test) - static_cast<double>(dup_cap) > capacity) {
    throw CapacityError("generate_corpora: requested " + std::to_string(n_x + n_y + n_test) +
                        " sentences exceed grammar capacity of about " +
                        std::to_string(static_cast<uint64_t>(capacity)));
  }

  Rng rng(Rng::derive(seed, "generate_corpora"));
  std::unordered_set<std::string> seen;  // across all three pools
  uint64_t next_id = 0;

  // draws L1-semantic sentences unique across ALL pools; duplicates are only
  // ever copies of sentences already inside the corpus being filled
  auto fill = [&](size_t count, auto&& emit_fresh, auto&& emit_dup) {
    size_t dup_budget = count / 20;
    std::vector<size_t> local;  // indices into this corpus for duplication
    size_t produced = 0;
    int consecutive_misses = 0;
    while (produced < count) {
      RawSentence s = render_sentence(pair, rng);
      std::string key = join_tokens(s);
      if (seen.insert(key).second) {
        emit_fresh(std::move(s), next_id++);
        ++produced;
        consecutive_misses = 0;
        continue;
      }
      if (++consecutive_misses >= 200) {
        if (dup_budget == 0 || produced == 0) {
          throw CapacityError(
              "generate_corpora: grammar capacity exhausted beyond the 5% duplication cap");
        }
        emit_dup(rng.index(produced));
        --dup_budget;
        ++produced;
        consecutive_misses = 0;
      }
    }
  };

  GeneratedCorpora out;
  out.x.lang = LangId::L1;
  out.y.lang = LangId::L2;

  fill(
      n_x,
      [&](RawSentence s, uint64_t id) {
        out.x.sentences.push_back(std::move(s));
        out.x.ids.push_back(id);
      },
      [&](size_t idx) {
        out.x.sentences.push_back(out.x.sentences[idx]);
        out.x.ids.push_back(out.x.ids[idx]);
      });

  fill(
      n_y,
      [&](RawSentence s, uint64_t id) {
        out.y.sentences.push_back(oracle_translate(pair, s, Direction::L1ToL2));
        out.y.ids.push_back(id);
      },
      [&](size_t idx) {
        out.y.sentences.push_back(out.y.sentences[idx]);
        out.y.ids.push_back(out.y.ids[idx]);
      });

  fill(
      n_test,
      [&](RawSentence s, uint64_t id) {
        RawSentence ref = oracle_translate(pair, s, Direction::L1ToL2);
        out.test.pairs.emplace_back(std::move(s), std::move(ref));
        out.test.ids.push_back(id);
      },
      [&](size_t idx) {
        out.test.pairs.push_back(out.test.pairs[idx]);
        out.test.ids.push_back(out.test.ids[idx]);
      });

  return out;
}

std::string LanguagePairSpec::to_json() const {
  nlohmann::json j;
  j["content_vocab_size"] = content_vocab_size;
  j["anchor_vocab_size"] = anchor_vocab_size;
  j["reorder_window"] = reorder_window;
  j["max_sentence_len"] = max_sentence_len;
  j["seed"] = seed;
  std::vector<std::string> templates;
  for (const auto& t : grammar_templates) templates.push_back(template_to_string(t));
  j["grammar_templates"] = templates;
  return j.dump(2);
}

LanguagePairSpec LanguagePairSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  LanguagePairSpec spec;
  if (j.contains("content_vocab_size")) spec.content_vocab_size = j["content_vocab_size"];
  if (j.contains("anchor_vocab_size")) spec.anchor_vocab_size = j["anchor_vocab_size"];
  if (j.contains("reorder_window")) spec.reorder_window = j["reorder_window"];
  if (j.contains("max_sentence_len")) spec.max_sentence_len = j["max_sentence_len"];
  if (j.contains("seed")) spec.seed = j["seed"];
  if (j.contains("grammar_templates")) {
    spec.grammar_templates.clear();
    for (const auto& t : j["grammar_templates"]) {
      spec.grammar_templates.push_back(template_from_string(t.get<std::string>()));
    }
  }
  return spec;
}

std::string LanguagePair::to_json() const {
  nlohmann::json j;
  j["spec"] = nlohmann::json::parse(spec.to_json());
  j["l1_words"] = l1_words;
  j["l2_words"] = l2_words;
  j["anchors"] = anchors;
  j["category_offsets"] = category_offsets;
  return j.dump(2);
}

LanguagePair LanguagePair::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  LanguagePair pair;
  pair.spec = LanguagePairSpec::from_json(j["spec"].dump());
  pair.l1_words = j["l1_words"].get<std::vector<std::string>>();
  pair.l2_words = j["l2_words"].get<std::vector<std::string>>();
  pair.anchors = j["anchors"].get<std::vector<std::string>>();
  auto off = j["category_offsets"].get<std::vector<int>>();
  if (off.size() != pair.category_offsets.size()) {
    throw ValidationError("category_offsets: expected 5 entries");
  }
  std::copy(off.begin(), off.end(), pair.category_offsets.begin());
  return pair;
}

void save_text_corpus(const TextCorpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& s : corpus.sentences) out << join_tokens(s) << '\n';
}

std::vector<RawSentence> load_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<RawSentence> out;
  std::string line;
  while (std::getline(in, line)) {
    RawSentence s = split_tokens(line);
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace unmtlab
