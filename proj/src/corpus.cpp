#include "unmtlab/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace unmtlab {

Vocab::Vocab() {
  // reserved ids, fixed at indices 0..5
  for (const char* tok : {"<pad>", "<bos>", "<eos>", "<unk>", "<l1>", "<l2>"}) {
    TokenId id = static_cast<TokenId>(id_to_token_.size());
    id_to_token_.emplace_back(tok);
    token_to_id_.emplace(tok, id);
  }
}

TokenId Vocab::add(const std::string& token) {
  if (token_to_id_.count(token)) {
    throw ValidationError("Vocab::add: duplicate token '" + token + "'");
  }
  TokenId id = static_cast<TokenId>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_.emplace(token, id);
  return id;
}

TokenId Vocab::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size()) {
    throw ValidationError("Vocab::token_of: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<size_t>(id)];
}

Sentence Vocab::encode(const RawSentence& raw) const {
  Sentence out;
  out.reserve(raw.size());
  for (const auto& tok : raw) out.push_back(id_of(tok));
  return out;
}

RawSentence Vocab::decode(const Sentence& ids) const {
  RawSentence out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id >= kNumReserved || id == kUnk) out.push_back(token_of(id));
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& tok : id_to_token_) out << tok << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  Vocab v;
  std::string line;
  size_t idx = 0;
  while (std::getline(in, line)) {
    if (idx >= static_cast<size_t>(kNumReserved)) v.add(line);
    ++idx;
  }
  return v;
}

Vocab build_vocab(const std::vector<const TextCorpus*>& corpora) {
  if (corpora.empty()) throw ValidationError("build_vocab: no corpora given");
  // std::map keeps key iteration ordered, making frequency ties deterministic
  std::map<std::string, uint64_t> freq;
  for (const TextCorpus* c : corpora) {
    for (const auto& s : c->sentences) {
      for (const auto& tok : s) ++freq[tok];
    }
  }
  std::vector<std::pair<std::string, uint64_t>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, _] : entries) v.add(tok);
  return v;
}

Vocab vocab_from_pair(const LanguagePair& pair) {
  Vocab v;
  for (const auto& w : pair.l1_words) v.add(w);
  for (const auto& w : pair.l2_words) v.add(w);
  for (const auto& a : pair.anchors) v.add(a);
  return v;
}

void MonoCorpus::validate(size_t vocab_size) const {
  for (size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].empty()) {
      throw ValidationError("MonoCorpus: empty sentence at index " + std::to_string(i));
    }
    for (TokenId id : sentences[i]) {
      if (id < 0 || static_cast<size_t>(id) >= vocab_size) {
        throw ValidationError("MonoCorpus: token id " + std::to_string(id) +
                              " out of vocab at sentence " + std::to_string(i));
      }
    }
  }
}

void ParallelCorpus::validate(size_t vocab_size) const {
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first.empty() || pairs[i].second.empty()) {
      throw ValidationError("ParallelCorpus: empty side at index " + std::to_string(i));
    }
    for (TokenId id : pairs[i].first) {
      if (id < 0 || static_cast<size_t>(id) >= vocab_size) {
        throw ValidationError("ParallelCorpus: token id out of vocab at pair " +
                              std::to_string(i));
      }
    }
    for (TokenId id : pairs[i].second) {
      if (id < 0 || static_cast<size_t>(id) >= vocab_size) {
        throw ValidationError("ParallelCorpus: token id out of vocab at pair " +
                              std::to_string(i));
      }
    }
  }
}

MonoCorpus encode_corpus(const Vocab& vocab, const TextCorpus& text, Origin origin) {
  MonoCorpus out;
  out.lang = text.lang;
  out.origin = origin;
  out.sentences.reserve(text.sentences.size());
  for (const auto& s : text.sentences) out.sentences.push_back(vocab.encode(s));
  return out;
}

MonoCorpus clean(const MonoCorpus& corpus, int max_len) {
  MonoCorpus out;
  out.lang = corpus.lang;
  out.origin = corpus.origin;
  for (const auto& s : corpus.sentences) {
    if (static_cast<int>(s.size()) <= max_len) out.sentences.push_back(s);
  }
  return out;
}

MonoCorpus subsample(const MonoCorpus& corpus, double epsilon, uint64_t seed,
                     std::vector<size_t>* picked) {
  if (!(epsilon > 0.0) || epsilon > 1.0) {
    throw ValidationError("subsample: epsilon must be in (0, 1], got " +
                          std::to_string(epsilon));
  }
  const size_t n = corpus.sentences.size();
  if (n == 0) throw ValidationError("subsample: corpus is empty");
  const size_t m = std::min(n, scaled_count(n, epsilon));

  std::vector<size_t> indices(n);
  for (size_t i = 0; i < n; ++i) indices[i] = i;
  Rng rng(Rng::derive(seed, "subsample"));
  rng.shuffle(indices);
  indices.resize(m);
  std::sort(indices.begin(), indices.end());  // preserve original relative order

  MonoCorpus out;
  out.lang = corpus.lang;
  out.origin = corpus.origin;
  out.sentences.reserve(m);
  for (size_t i : indices) out.sentences.push_back(corpus.sentences[i]);
  if (picked) *picked = std::move(indices);
  return out;
}

namespace {

// Greedy packing in shuffled order; the running cost of a batch is
// count * max_len so padding is charged against the budget.
template <typename Item, typename LenFn>
std::vector<std::vector<size_t>> pack_batches(const std::vector<Item>& items,
                                              int batch_size_tokens, uint64_t seed,
                                              LenFn&& len_of) {
  for (size_t i = 0; i < items.size(); ++i) {
    if (static_cast<int>(len_of(items[i])) > batch_size_tokens) {
      throw ValidationError("batch_iter: sentence at index " + std::to_string(i) +
                            " has " + std::to_string(len_of(items[i])) +
                            " tokens, exceeding the batch budget of " +
                            std::to_string(batch_size_tokens));
    }
  }
  std::vector<size_t> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::derive(seed, "batch_iter"));
  rng.shuffle(order);

  std::vector<std::vector<size_t>> batches;
  std::vector<size_t> current;
  size_t max_len = 0;
  for (size_t idx : order) {
    size_t len = len_of(items[idx]);
    size_t new_max = std::max(max_len, len);
    if (!current.empty() &&
        static_cast<int>((current.size() + 1) * new_max) > batch_size_tokens) {
      batches.push_back(std::move(current));
      current.clear();
      max_len = 0;
      new_max = len;
    }
    current.push_back(idx);
    max_len = new_max;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

}  // namespace

std::vector<MonoBatch> batch_iter(const MonoCorpus& corpus, int batch_size_tokens,
                                  uint64_t seed) {
  auto groups = pack_batches(corpus.sentences, batch_size_tokens, seed,
                             [](const Sentence& s) { return s.size(); });
  std::vector<MonoBatch> out;
  out.reserve(groups.size());
  for (auto& g : groups) {
    MonoBatch b;
    for (size_t idx : g) {
      b.sentences.push_back(corpus.sentences[idx]);
      b.indices.push_back(idx);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<ParallelBatch> batch_iter(const ParallelCorpus& corpus, int batch_size_tokens,
                                      uint64_t seed) {
  auto groups = pack_batches(corpus.pairs, batch_size_tokens, seed,
                             [](const std::pair<Sentence, Sentence>& p) {
                               return std::max(p.first.size(), p.second.size());
                             });
  std::vector<ParallelBatch> out;
  out.reserve(groups.size());
  for (auto& g : groups) {
    ParallelBatch b;
    for (size_t idx : g) {
      b.pairs.push_back(corpus.pairs[idx]);
      b.indices.push_back(idx);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace unmtlab
