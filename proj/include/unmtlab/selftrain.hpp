#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unmtlab/toylang.hpp"
#include "unmtlab/unmt.hpp"

namespace unmtlab {

enum class OptReset { KeepAcrossEpochs, ResetEachEpoch };

// Whether each self-training epoch keeps training the previous model or
// starts from a fresh random initialization (the generator is always the
// previous epoch's model either way).
enum class WarmStart { Continue, Reinit };

// Chunked decoding keeps the batch matrices small on large corpora.
std::vector<Sentence> translate_all(const Translator& generator,
                                    const std::vector<Sentence>& src, LangId target_lang,
                                    size_t chunk_size = 256);

struct SelfTrainConfig {
  double epsilon = 0.10;      // fraction of X drawn each epoch
  int max_epochs = 2;
  int steps_per_epoch = 1500;
  OptReset opt_reset = OptReset::KeepAcrossEpochs;
  WarmStart warm_start = WarmStart::Continue;
  UnmtConfig unmt;  // batching, noise, optimizer and seed

  void validate() const;
};

// One synthetic corpus: selected source sentences paired with the frozen
// generator's translations (empty outputs replaced by a single <unk>).
struct SyntheticParallel {
  std::vector<size_t> source_indices;  // rows of the natural source corpus
  std::vector<std::pair<Sentence, Sentence>> pairs;  // (source, translation)
  uint64_t generator_model_id = 0;
};

SyntheticParallel generate_synthetic_parallel(const Translator& generator,
                                              const MonoCorpus& source, double epsilon,
                                              uint64_t seed);

// Just the translated side, for mixing into a monolingual pool.
std::vector<Sentence> generate_synthetic_mono(const Translator& generator,
                                              const MonoCorpus& source, double epsilon,
                                              uint64_t seed,
                                              std::vector<size_t>* picked = nullptr);

// Both synthetic corpora one projection epoch trains on: translations of a
// fresh epsilon-subsample of X, and translations of every sentence of Y.
struct StPtCorpora {
  SyntheticParallel x_sub;  // (natural x, generated y)
  SyntheticParallel y_all;  // (natural y, generated x)
};

StPtCorpora generate_st_pt_corpora(const Translator& generator, const MonoCorpus& x,
                                   const MonoCorpus& y, double epsilon, uint64_t seed);

struct SyntheticRecord {
  int epoch = 0;  // epoch that consumed the corpus (1-based)
  std::string kind;  // "y_from_x_sub" or "x_from_y_all"
  uint64_t generator_model_id = 0;
  std::vector<size_t> source_indices;
  size_t pair_count = 0;
};

struct EpochScores {
  int epoch = 0;  // 0 = the starting model
  double bleu_xy = 0.0;
  double bleu_yx = 0.0;
};

struct StResult {
  ModelSnapshot model;
  TrainHistory history;
  std::vector<UpdateRecord> updates;
  std::vector<SyntheticRecord> records;
  std::vector<uint64_t> epoch_model_ids;  // [0] = starting model id, then one per epoch
  std::vector<EpochScores> epoch_scores;  // filled when a monitor is given
  // generated pairs kept for inspection, aligned with `records`
  std::vector<std::vector<std::pair<Sentence, Sentence>>> record_pairs;
};

// Self-training on unsupervised terms: each epoch freezes the current model,
// translates a fresh subsample of X into L2, and continues the joint
// denoising + back-translation loop with the Y-side back-translation pool
// replaced by Y plus those synthetic sentences. Everything else is plain
// unsupervised training.
StResult train_st_ut(const ModelSnapshot& start, const MonoCorpus& x, const MonoCorpus& y,
                     const Vocab& vocab, const SelfTrainConfig& cfg,
                     const EvalSet* monitor = nullptr,
                     const Translator* generator_override = nullptr);

// Self-training on pseudo-parallel terms: each epoch the frozen model builds
// two synthetic corpora, (X subsample -> translations) and (all of Y ->
// translations), and the model then trains purely supervised on them, one
// update per direction per corpus per step. No denoising, no
// back-translation, no natural parallel data.
StResult train_st_pt(const ModelSnapshot& start, const MonoCorpus& x, const MonoCorpus& y,
                     const Vocab& vocab, const SelfTrainConfig& cfg,
                     const EvalSet* monitor = nullptr,
                     const Translator* generator_override = nullptr);

// Budget-matched control: the plain joint loop continued from the same model
// for max_epochs * steps_per_epoch further steps (four updates per step,
// exactly like the self-training arms).
StResult train_baseline_extra(const ModelSnapshot& start, const MonoCorpus& x,
                              const MonoCorpus& y, const Vocab& vocab,
                              const SelfTrainConfig& cfg, const EvalSet* monitor = nullptr);

// Plain supervised training continued from an existing model: every step
// draws one parallel batch and updates both directions. The ceiling
// companion for oracle-generator pipeline checks.
StResult train_supervised(const ModelSnapshot& start, const ParallelCorpus& data,
                          const Vocab& vocab, const UnmtConfig& cfg, int steps,
                          const EvalSet* monitor = nullptr);

// Answers with exact reference translations from the bilingual world; used to
// isolate pipeline behavior from model quality.
class OracleTranslator : public Translator {
 public:
  OracleTranslator(const LanguagePair& pair, const Vocab& vocab, uint64_t id = 0)
      : pair_(pair), vocab_(vocab), id_(id) {}
  std::vector<Sentence> translate_batch(const std::vector<Sentence>& src,
                                        LangId target_lang) const override;
  uint64_t model_id() const override { return id_; }

 private:
  const LanguagePair& pair_;
  const Vocab& vocab_;
  uint64_t id_;
};

// Writes each record's pairs as source/target text files plus a JSON
// manifest (epoch, kind, generator id, sizes) into `dir`.
void save_synthetic_records(const StResult& result, const Vocab& vocab,
                            const std::string& dir);

}  // namespace unmtlab
