#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "unmtlab/corpus.hpp"
#include "unmtlab/noise.hpp"
#include "unmtlab/seq2seq.hpp"

namespace unmtlab {

struct UnmtConfig {
  int warmstart_steps = 500;  // joint denoising steps before back-translation
  int bt_steps = 3000;        // joint steps: denoise both sides + one BT update per direction
  NoiseSpec noise;
  int batch_size_tokens = 500;
  AdamConfig optim;
  int eval_every = 100;  // monitor BLEU every N steps (must stay positive)
  uint64_t seed = 1;

  void validate() const;
};

// One monitor row per optimization step. Loss columns not exercised by a
// phase stay NaN and serialize as empty CSV cells. loss_xy/loss_yx emit as
// bt_loss_xy/bt_loss_yx in the CSV; purely supervised phases route their
// per-direction supervised losses through the same columns.
struct HistoryRow {
  std::string phase;
  int epoch = 0;  // 0 outside self-training
  int step = 0;   // 1-based, strictly increasing across the whole history
  double dae_loss_x = std::numeric_limits<double>::quiet_NaN();
  double dae_loss_y = std::numeric_limits<double>::quiet_NaN();
  double loss_xy = std::numeric_limits<double>::quiet_NaN();
  double loss_yx = std::numeric_limits<double>::quiet_NaN();
  double bleu_xy = std::numeric_limits<double>::quiet_NaN();
  double bleu_yx = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
  std::vector<HistoryRow> rows;
  void save_csv(const std::string& path) const;
};

// Endless batch source over a fixed sentence pool: each cycle visits every
// sentence exactly once in a freshly shuffled order, packing batches under
// the padded-token budget. Smaller pools simply recycle more often.
class BatchStream {
 public:
  BatchStream(MonoCorpus corpus, int batch_size_tokens, uint64_t seed,
              std::string pool_tag);
  const MonoBatch& next();
  size_t cycles() const { return cycle_; }
  const std::string& pool_tag() const { return tag_; }
  const MonoCorpus& corpus() const { return corpus_; }

 private:
  void refill();
  MonoCorpus corpus_;
  int budget_;
  uint64_t seed_;
  std::string tag_;
  size_t cycle_ = 0;
  std::vector<MonoBatch> batches_;
  size_t pos_ = 0;
};

class PairStream {
 public:
  PairStream(ParallelCorpus corpus, int batch_size_tokens, uint64_t seed,
             std::string pool_tag);
  const ParallelBatch& next();
  size_t cycles() const { return cycle_; }
  const std::string& pool_tag() const { return tag_; }
  const ParallelCorpus& corpus() const { return corpus_; }

 private:
  void refill();
  ParallelCorpus corpus_;
  int budget_;
  uint64_t seed_;
  std::string tag_;
  size_t cycle_ = 0;
  std::vector<ParallelBatch> batches_;
  size_t pos_ = 0;
};

// Encoded test sources plus surface references for both directions.
struct EvalSet {
  std::vector<Sentence> src_l1, src_l2;
  std::vector<RawSentence> ref_l2, ref_l1;
};

EvalSet make_eval_set(const Vocab& vocab, const TextParallelCorpus& test, size_t limit = 0);

struct EvalScores {
  double bleu_xy = 0.0;  // L1 -> L2
  double bleu_yx = 0.0;  // L2 -> L1
};

EvalScores evaluate_model(const ModelSnapshot& model, const Vocab& vocab, const EvalSet& eval);

// One denoising auto-encoder update on a monolingual batch: reconstruct each
// sentence from its corrupted copy. Returns the loss.
double dae_step(ModelSnapshot& model, OptState& opt, const std::vector<Sentence>& batch,
                LangId lang, const Vocab& vocab, const NoiseSpec& noise, Rng& rng);

// One supervised update on (source, target) pairs toward tgt_lang.
double supervised_step(ModelSnapshot& model, OptState& opt,
                       const std::vector<std::pair<Sentence, Sentence>>& pairs,
                       LangId tgt_lang, const Vocab& vocab);

struct BtStepInfo {
  double loss = 0.0;
  uint64_t generator_model_id = 0;
  std::vector<Sentence> generated;  // intermediate translations, post UNK fix
};

// One back-translation update from a batch of `mono_lang` sentences: the
// generator (the current model frozen for the step, unless overridden)
// translates the batch into the other language; the model then trains
// supervised on (translation -> original). Generation happens strictly
// before the update, so no gradient flows through it. Empty translations
// are replaced by a single <unk> so the training source is never empty.
BtStepInfo backtranslation_step(ModelSnapshot& model, OptState& opt,
                                const std::vector<Sentence>& batch, LangId mono_lang,
                                const Vocab& vocab,
                                const Translator* generator = nullptr);

// One joint back-translation step: exactly one update seeded from an X batch
// (training the Y->X direction) and one from a Y batch (training X->Y).
struct BtPairInfo {
  BtStepInfo from_x;  // generated Y', trained on Y' -> X
  BtStepInfo from_y;  // generated X', trained on X' -> Y
};

BtPairInfo backtranslation_pair_step(ModelSnapshot& model, OptState& opt,
                                     const std::vector<Sentence>& x_batch,
                                     const std::vector<Sentence>& y_batch, const Vocab& vocab,
                                     const Translator* generator = nullptr);

// Per-update audit trail: which stream fed the update, what data origin the
// stream's pool has ("natural", "synthetic" or "mixed"), and the loss.
struct UpdateRecord {
  std::string phase;
  int epoch = 0;
  int step = 0;
  std::string kind;  // dae_x, dae_y, bt_xy, bt_yx, sup_xy_sub, sup_yx_sub, sup_xy_all, sup_yx_all
  std::string pool_tag;
  double loss = 0.0;
};

struct TrainResult {
  ModelSnapshot model;
  TrainHistory history;
  std::vector<UpdateRecord> updates;
};

uint64_t stamp_model(ModelSnapshot& model, uint64_t seed, const std::string& label);

// Unsupervised training from scratch: a joint denoising warm start over both
// languages, then joint steps that mix denoising with online back-translation
// in both directions (four updates per step).
TrainResult train_unmt(const ModelDims& dims, const MonoCorpus& x, const MonoCorpus& y,
                       const Vocab& vocab, const UnmtConfig& cfg,
                       const EvalSet* monitor = nullptr);

// The same joint loop continued from an existing model with fresh optimizer
// moments; used for budget-matched baseline extension and by self-training.
void continue_unmt(ModelSnapshot& model, OptState& opt, const MonoCorpus& x,
                   const MonoCorpus& y, const MonoCorpus& bt_pool_x,
                   const MonoCorpus& bt_pool_y, const Vocab& vocab, const UnmtConfig& cfg,
                   int steps, const std::string& phase, int epoch, TrainHistory* history,
                   std::vector<UpdateRecord>* updates, const EvalSet* monitor,
                   const Translator* generator_override = nullptr);

}  // namespace unmtlab
