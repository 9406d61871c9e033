#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "unmtlab/common.hpp"

namespace unmtlab {

// Corpus-level BLEU-4 with multi-bleu semantics: clipped n-gram counts
// aggregated over the corpus, geometric mean of p1..p4, multiplicative
// brevity penalty, no smoothing. Score is on the 0..100 scale.
struct BleuReport {
  std::array<double, 4> precisions{};  // p1..p4
  double brevity_penalty = 0.0;
  size_t hyp_len = 0;  // c
  size_t ref_len = 0;  // r
  double score = 0.0;

  std::string to_json() const;
};

// Per-sentence sufficient statistics; a corpus score is a pure function of
// their sums, which is what makes bootstrap resampling cheap.
struct BleuStats {
  std::array<uint64_t, 4> match{};  // clipped n-gram matches
  std::array<uint64_t, 4> total{};  // hypothesis n-gram counts
  uint64_t hyp_len = 0;
  uint64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
};

BleuStats sentence_bleu_stats(const RawSentence& hyp, const RawSentence& ref);
BleuReport bleu_from_stats(const BleuStats& agg);

BleuReport bleu(const std::vector<RawSentence>& hypotheses,
                const std::vector<RawSentence>& references);

// Paired bootstrap resampling: p_value is the fraction of resamples where
// system B scores at least as high as system A, win_fraction its complement.
struct SignificanceResult {
  std::string system_a;
  std::string system_b;
  int bootstrap_samples = 0;
  double win_fraction = 0.0;  // fraction of resamples with BLEU(a) > BLEU(b)
  double p_value = 1.0;       // fraction with BLEU(b) >= BLEU(a)
  bool significant_at_01 = false;

  std::string to_json() const;
};

SignificanceResult paired_bootstrap(const std::vector<RawSentence>& hyp_a,
                                    const std::vector<RawSentence>& hyp_b,
                                    const std::vector<RawSentence>& references,
                                    int n_samples = 1000, uint64_t seed = 1,
                                    const std::string& name_a = "a",
                                    const std::string& name_b = "b");

}  // namespace unmtlab
