#include "unmtlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace unmtlab {

namespace {

// n-grams are hashed incrementally; collisions are a non-issue at toy vocab
// sizes but we keep full token equality by hashing the joined string.
void count_ngrams(const RawSentence& s, int n,
                  std::unordered_map<std::string, uint64_t>& counts) {
  if (static_cast<int>(s.size()) < n) return;
  for (size_t i = 0; i + n <= s.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k) key += '\x1f';
      key += s[i + k];
    }
    ++counts[key];
  }
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int n = 0; n < 4; ++n) {
    match[n] += o.match[n];
    total[n] += o.total[n];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

BleuStats sentence_bleu_stats(const RawSentence& hyp, const RawSentence& ref) {
  BleuStats st;
  st.hyp_len = hyp.size();
  st.ref_len = ref.size();
  for (int n = 1; n <= 4; ++n) {
    std::unordered_map<std::string, uint64_t> hyp_counts, ref_counts;
    count_ngrams(hyp, n, hyp_counts);
    count_ngrams(ref, n, ref_counts);
    uint64_t total = 0, match = 0;
    for (const auto& [gram, c] : hyp_counts) {
      total += c;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) match += std::min(c, it->second);
    }
    st.match[n - 1] = match;
    st.total[n - 1] = total;
  }
  return st;
}

BleuReport bleu_from_stats(const BleuStats& agg) {
  BleuReport rep;
  rep.hyp_len = agg.hyp_len;
  rep.ref_len = agg.ref_len;
  bool any_zero = false;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    double p = agg.total[n] > 0
                   ? static_cast<double>(agg.match[n]) / static_cast<double>(agg.total[n])
                   : 0.0;
    rep.precisions[n] = p;
    if (p <= 0.0) {
      any_zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  if (agg.hyp_len == 0) {
    rep.brevity_penalty = 0.0;
    rep.score = 0.0;
    return rep;
  }
  rep.brevity_penalty = std::min(
      1.0, std::exp(1.0 - static_cast<double>(agg.ref_len) / static_cast<double>(agg.hyp_len)));
  rep.score = any_zero ? 0.0 : 100.0 * rep.brevity_penalty * std::exp(log_sum / 4.0);
  return rep;
}

BleuReport bleu(const std::vector<RawSentence>& hypotheses,
                const std::vector<RawSentence>& references) {
  if (hypotheses.size() != references.size()) {
    throw ValidationError("bleu: hypothesis count " + std::to_string(hypotheses.size()) +
                          " != reference count " + std::to_string(references.size()));
  }
  if (references.empty()) throw ValidationError("bleu: references are empty");
  BleuStats agg;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    agg += sentence_bleu_stats(hypotheses[i], references[i]);
  }
  return bleu_from_stats(agg);
}

SignificanceResult paired_bootstrap(const std::vector<RawSentence>& hyp_a,
                                    const std::vector<RawSentence>& hyp_b,
                                    const std::vector<RawSentence>& references,
                                    int n_samples, uint64_t seed,
                                    const std::string& name_a, const std::string& name_b) {
  if (hyp_a.size() != references.size() || hyp_b.size() != references.size()) {
    throw ValidationError("paired_bootstrap: hypothesis/reference counts differ (a=" +
                          std::to_string(hyp_a.size()) + ", b=" + std::to_string(hyp_b.size()) +
                          ", refs=" + std::to_string(references.size()) + ")");
  }
  if (references.empty()) throw ValidationError("paired_bootstrap: references are empty");
  if (n_samples < 1000) {
    throw ValidationError("paired_bootstrap: bootstrap sample count must be >= 1000, got " +
                          std::to_string(n_samples));
  }

  const size_t n = references.size();
  std::vector<BleuStats> stats_a(n), stats_b(n);
  for (size_t i = 0; i < n; ++i) {
    stats_a[i] = sentence_bleu_stats(hyp_a[i], references[i]);
    stats_b[i] = sentence_bleu_stats(hyp_b[i], references[i]);
  }

  Rng rng(Rng::derive(seed, "paired_bootstrap"));
  int b_wins_or_ties = 0;
  for (int s = 0; s < n_samples; ++s) {
    BleuStats agg_a, agg_b;
    for (size_t i = 0; i < n; ++i) {
      size_t idx = rng.index(n);
      agg_a += stats_a[idx];
      agg_b += stats_b[idx];
    }
    if (bleu_from_stats(agg_b).score >= bleu_from_stats(agg_a).score) ++b_wins_or_ties;
  }

  SignificanceResult res;
  res.system_a = name_a;
  res.system_b = name_b;
  res.bootstrap_samples = n_samples;
  res.p_value = static_cast<double>(b_wins_or_ties) / n_samples;
  res.win_fraction = 1.0 - res.p_value;
  res.significant_at_01 = res.p_value < 0.01;
  return res;
}

std::string BleuReport::to_json() const {
  nlohmann::json j;
  j["p1"] = precisions[0];
  j["p2"] = precisions[1];
  j["p3"] = precisions[2];
  j["p4"] = precisions[3];
  j["brevity_penalty"] = brevity_penalty;
  j["hyp_len"] = hyp_len;
  j["ref_len"] = ref_len;
  j["score"] = score;
  return j.dump(2);
}

std::string SignificanceResult::to_json() const {
  nlohmann::json j;
  j["system_a"] = system_a;
  j["system_b"] = system_b;
  j["bootstrap_samples"] = bootstrap_samples;
  j["win_fraction"] = win_fraction;
  j["p_value"] = p_value;
  j["significant_at_01"] = significant_at_01;
  return j.dump(2);
}

}  // namespace unmtlab
