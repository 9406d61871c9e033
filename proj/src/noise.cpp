#include "unmtlab/noise.hpp"

#include <algorithm>
#include <numeric>

#include "unmtlab/corpus.hpp"

namespace unmtlab {

void NoiseSpec::validate() const {
  if (p_drop < 0.0 || p_drop > 1.0) {
    throw ValidationError("p_drop must be in [0, 1], got " + std::to_string(p_drop));
  }
  if (p_blank < 0.0 || p_blank > 1.0) {
    throw ValidationError("p_blank must be in [0, 1], got " + std::to_string(p_blank));
  }
  if (p_drop + p_blank > 1.0) {
    throw ValidationError("p_drop + p_blank must be <= 1, got " +
                          std::to_string(p_drop + p_blank));
  }
  if (shuffle_k < 0) {
    throw ValidationError("shuffle_k must be >= 0, got " + std::to_string(shuffle_k));
  }
}

Sentence apply_noise(const Sentence& sentence, const NoiseSpec& spec, Rng& rng) {
  if (sentence.empty()) throw ValidationError("apply_noise: sentence is empty");
  spec.validate();

  // per-token decision: drop, blank, or keep
  Sentence kept;
  kept.reserve(sentence.size());
  for (TokenId tok : sentence) {
    double u = rng.uniform();
    if (u < spec.p_drop) continue;
    kept.push_back(u < spec.p_drop + spec.p_blank ? Vocab::kUnk : tok);
  }
  if (kept.empty()) {
    // keep-one floor: resurrect a uniformly chosen token
    kept.push_back(sentence[rng.index(sentence.size())]);
  }

  if (spec.shuffle_k == 0 || kept.size() < 2) return kept;

  std::vector<std::pair<double, size_t>> keys(kept.size());
  for (size_t i = 0; i < kept.size(); ++i) {
    keys[i] = {static_cast<double>(i) + rng.uniform(0.0, spec.shuffle_k + 1.0), i};
  }
  std::stable_sort(keys.begin(), keys.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  Sentence out(kept.size());
  for (size_t i = 0; i < kept.size(); ++i) out[i] = kept[keys[i].second];
  return out;
}

}  // namespace unmtlab
