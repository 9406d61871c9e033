#include "unmtlab/unmt.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "unmtlab/eval.hpp"

namespace unmtlab {

namespace {

std::string fmt_cell(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void UnmtConfig::validate() const {
  if (warmstart_steps < 0) throw ValidationError("warmstart_steps must be >= 0");
  if (bt_steps < 0) throw ValidationError("bt_steps must be >= 0");
  if (batch_size_tokens <= 0) throw ValidationError("batch_size_tokens must be positive");
  if (eval_every <= 0) throw ValidationError("eval_every must be positive");
  noise.validate();
}

void TrainHistory::save_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "phase,epoch,step,dae_loss_x,dae_loss_y,bt_loss_xy,bt_loss_yx,bleu_xy,bleu_yx\n";
  for (const auto& r : rows) {
    f << r.phase << ',' << r.epoch << ',' << r.step << ',' << fmt_cell(r.dae_loss_x) << ','
      << fmt_cell(r.dae_loss_y) << ',' << fmt_cell(r.loss_xy) << ',' << fmt_cell(r.loss_yx)
      << ',' << fmt_cell(r.bleu_xy) << ',' << fmt_cell(r.bleu_yx) << '\n';
  }
  if (!f) throw IoError("write failed: " + path);
}

BatchStream::BatchStream(MonoCorpus corpus, int batch_size_tokens, uint64_t seed,
                         std::string pool_tag)
    : corpus_(std::move(corpus)), budget_(batch_size_tokens), seed_(seed),
      tag_(std::move(pool_tag)) {
  if (corpus_.sentences.empty()) throw ValidationError("batch stream over an empty pool");
  refill();
}

void BatchStream::refill() {
  batches_ = batch_iter(corpus_, budget_, Rng::derive(seed_, cycle_));
  pos_ = 0;
}

const MonoBatch& BatchStream::next() {
  if (pos_ >= batches_.size()) {
    ++cycle_;
    refill();
  }
  return batches_[pos_++];
}

PairStream::PairStream(ParallelCorpus corpus, int batch_size_tokens, uint64_t seed,
                       std::string pool_tag)
    : corpus_(std::move(corpus)), budget_(batch_size_tokens), seed_(seed),
      tag_(std::move(pool_tag)) {
  if (corpus_.pairs.empty()) throw ValidationError("pair stream over an empty pool");
  refill();
}

void PairStream::refill() {
  batches_ = batch_iter(corpus_, budget_, Rng::derive(seed_, cycle_));
  pos_ = 0;
}

const ParallelBatch& PairStream::next() {
  if (pos_ >= batches_.size()) {
    ++cycle_;
    refill();
  }
  return batches_[pos_++];
}

EvalSet make_eval_set(const Vocab& vocab, const TextParallelCorpus& test, size_t limit) {
  EvalSet ev;
  size_t n = test.pairs.size();
  if (limit > 0 && limit < n) n = limit;
  ev.src_l1.reserve(n);
  ev.src_l2.reserve(n);
  ev.ref_l1.reserve(n);
  ev.ref_l2.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    ev.src_l1.push_back(vocab.encode(test.pairs[i].first));
    ev.src_l2.push_back(vocab.encode(test.pairs[i].second));
    ev.ref_l1.push_back(test.pairs[i].first);
    ev.ref_l2.push_back(test.pairs[i].second);
  }
  return ev;
}

EvalScores evaluate_model(const ModelSnapshot& model, const Vocab& vocab, const EvalSet& ev) {
  EvalScores s;
  auto hyp_l2 = translate(model, ev.src_l1, Vocab::kTagL2);
  auto hyp_l1 = translate(model, ev.src_l2, Vocab::kTagL1);
  std::vector<RawSentence> h2(hyp_l2.size()), h1(hyp_l1.size());
  for (size_t i = 0; i < hyp_l2.size(); ++i) h2[i] = vocab.decode(hyp_l2[i]);
  for (size_t i = 0; i < hyp_l1.size(); ++i) h1[i] = vocab.decode(hyp_l1[i]);
  s.bleu_xy = bleu(h2, ev.ref_l2).score;
  s.bleu_yx = bleu(h1, ev.ref_l1).score;
  return s;
}

double dae_step(ModelSnapshot& model, OptState& opt, const std::vector<Sentence>& batch,
                LangId lang, const Vocab& vocab, const NoiseSpec& noise, Rng& rng) {
  if (batch.empty()) throw ValidationError("denoising update on an empty batch");
  std::vector<Sentence> src(batch.size()), tgt(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    src[i] = apply_noise(batch[i], noise, rng);
    tgt[i] = wrap_target(batch[i]);
  }
  LossResult res = forward_loss(model, src, tgt, vocab.lang_tag(lang));
  adam_step(opt, model, res.grads);
  return res.loss;
}

double supervised_step(ModelSnapshot& model, OptState& opt,
                       const std::vector<std::pair<Sentence, Sentence>>& pairs,
                       LangId tgt_lang, const Vocab& vocab) {
  if (pairs.empty()) throw ValidationError("supervised update on an empty batch");
  std::vector<Sentence> src(pairs.size()), tgt(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    src[i] = pairs[i].first;
    tgt[i] = wrap_target(pairs[i].second);
  }
  LossResult res = forward_loss(model, src, tgt, vocab.lang_tag(tgt_lang));
  adam_step(opt, model, res.grads);
  return res.loss;
}

BtStepInfo backtranslation_step(ModelSnapshot& model, OptState& opt,
                                const std::vector<Sentence>& batch, LangId mono_lang,
                                const Vocab& vocab, const Translator* generator) {
  if (batch.empty()) throw ValidationError("back-translation update on an empty batch");
  BtStepInfo info;
  LangId src_lang = other_lang(mono_lang);
  if (generator != nullptr) {
    info.generated = generator->translate_batch(batch, src_lang);
    info.generator_model_id = generator->model_id();
  } else {
    info.generated = translate(model, batch, vocab.lang_tag(src_lang));
    info.generator_model_id = model.model_id;
  }
  for (auto& s : info.generated) {
    if (s.empty()) s.push_back(Vocab::kUnk);
  }
  std::vector<std::pair<Sentence, Sentence>> pairs(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) pairs[i] = {info.generated[i], batch[i]};
  info.loss = supervised_step(model, opt, pairs, mono_lang, vocab);
  return info;
}

BtPairInfo backtranslation_pair_step(ModelSnapshot& model, OptState& opt,
                                     const std::vector<Sentence>& x_batch,
                                     const std::vector<Sentence>& y_batch, const Vocab& vocab,
                                     const Translator* generator) {
  BtPairInfo info;
  info.from_x = backtranslation_step(model, opt, x_batch, LangId::L1, vocab, generator);
  info.from_y = backtranslation_step(model, opt, y_batch, LangId::L2, vocab, generator);
  return info;
}

uint64_t stamp_model(ModelSnapshot& model, uint64_t seed, const std::string& label) {
  model.model_id = Rng::derive(seed, label);
  return model.model_id;
}

namespace {

void push_update(std::vector<UpdateRecord>* updates, const std::string& phase, int epoch,
                 int step, const char* kind, const std::string& pool_tag, double loss) {
  if (updates == nullptr) return;
  updates->push_back({phase, epoch, step, kind, pool_tag, loss});
}

}  // namespace

void continue_unmt(ModelSnapshot& model, OptState& opt, const MonoCorpus& x,
                   const MonoCorpus& y, const MonoCorpus& bt_pool_x,
                   const MonoCorpus& bt_pool_y, const Vocab& vocab, const UnmtConfig& cfg,
                   int steps, const std::string& phase, int epoch, TrainHistory* history,
                   std::vector<UpdateRecord>* updates, const EvalSet* monitor,
                   const Translator* generator_override) {
  cfg.validate();
  if (x.lang != LangId::L1 || y.lang != LangId::L2) {
    throw ValidationError("joint loop expects x in L1 and y in L2");
  }
  if (bt_pool_x.lang != LangId::L1 || bt_pool_y.lang != LangId::L2) {
    throw ValidationError("back-translation pools have the wrong language sides");
  }
  uint64_t phase_seed = Rng::derive(cfg.seed, phase + "/" + std::to_string(epoch));
  BatchStream dae_x(x, cfg.batch_size_tokens, Rng::derive(phase_seed, "dae_x"),
                    "natural");
  BatchStream dae_y(y, cfg.batch_size_tokens, Rng::derive(phase_seed, "dae_y"),
                    "natural");
  BatchStream bt_x(bt_pool_x, cfg.batch_size_tokens, Rng::derive(phase_seed, "bt_x"),
                   bt_pool_x.origin == Origin::Natural ? "natural" : "mixed");
  BatchStream bt_y(bt_pool_y, cfg.batch_size_tokens, Rng::derive(phase_seed, "bt_y"),
                   bt_pool_y.origin == Origin::Natural ? "natural" : "mixed");
  Rng noise_rng(Rng::derive(phase_seed, "noise"));

  for (int step = 1; step <= steps; ++step) {
    // History steps count optimization steps across the whole run, so appended
    // phases keep the column strictly increasing.
    int row_step = history != nullptr ? static_cast<int>(history->rows.size()) + 1 : step;
    HistoryRow row;
    row.phase = phase;
    row.epoch = epoch;
    row.step = row_step;
    row.dae_loss_x =
        dae_step(model, opt, dae_x.next().sentences, LangId::L1, vocab, cfg.noise, noise_rng);
    push_update(updates, phase, epoch, row_step, "dae_x", dae_x.pool_tag(), row.dae_loss_x);
    row.dae_loss_y =
        dae_step(model, opt, dae_y.next().sentences, LangId::L2, vocab, cfg.noise, noise_rng);
    push_update(updates, phase, epoch, row_step, "dae_y", dae_y.pool_tag(), row.dae_loss_y);
    // a batch of x back-translates into L2 (training y->x), then one of y
    // back-translates into L1 (training x->y): two BT terms per joint step
    BtPairInfo bt = backtranslation_pair_step(model, opt, bt_x.next().sentences,
                                              bt_y.next().sentences, vocab, generator_override);
    row.loss_yx = bt.from_x.loss;
    push_update(updates, phase, epoch, row_step, "bt_yx", bt_x.pool_tag(), bt.from_x.loss);
    row.loss_xy = bt.from_y.loss;
    push_update(updates, phase, epoch, row_step, "bt_xy", bt_y.pool_tag(), bt.from_y.loss);
    if (monitor != nullptr && (step % cfg.eval_every == 0 || step == steps)) {
      EvalScores s = evaluate_model(model, vocab, *monitor);
      row.bleu_xy = s.bleu_xy;
      row.bleu_yx = s.bleu_yx;
    }
    if (history != nullptr) history->rows.push_back(std::move(row));
  }
}

TrainResult train_unmt(const ModelDims& dims, const MonoCorpus& x, const MonoCorpus& y,
                       const Vocab& vocab, const UnmtConfig& cfg, const EvalSet* monitor) {
  cfg.validate();
  dims.validate();
  x.validate(vocab.size());
  y.validate(vocab.size());
  if (x.lang != LangId::L1 || y.lang != LangId::L2) {
    throw ValidationError("unsupervised training expects x in L1 and y in L2");
  }

  TrainResult out;
  out.model = init_model(dims, Rng::derive(cfg.seed, "init"));
  OptState opt = OptState::fresh(out.model, cfg.optim);

  uint64_t ws_seed = Rng::derive(cfg.seed, "warmstart");
  BatchStream ws_x(x, cfg.batch_size_tokens, Rng::derive(ws_seed, "x"), "natural");
  BatchStream ws_y(y, cfg.batch_size_tokens, Rng::derive(ws_seed, "y"), "natural");
  Rng noise_rng(Rng::derive(ws_seed, "noise"));
  for (int step = 1; step <= cfg.warmstart_steps; ++step) {
    int row_step = static_cast<int>(out.history.rows.size()) + 1;
    HistoryRow row;
    row.phase = "warmstart";
    row.step = row_step;
    row.dae_loss_x = dae_step(out.model, opt, ws_x.next().sentences, LangId::L1, vocab,
                              cfg.noise, noise_rng);
    push_update(&out.updates, "warmstart", 0, row_step, "dae_x", "natural", row.dae_loss_x);
    row.dae_loss_y = dae_step(out.model, opt, ws_y.next().sentences, LangId::L2, vocab,
                              cfg.noise, noise_rng);
    push_update(&out.updates, "warmstart", 0, row_step, "dae_y", "natural", row.dae_loss_y);
    if (monitor != nullptr && (step % cfg.eval_every == 0 || step == cfg.warmstart_steps)) {
      EvalScores s = evaluate_model(out.model, vocab, *monitor);
      row.bleu_xy = s.bleu_xy;
      row.bleu_yx = s.bleu_yx;
    }
    out.history.rows.push_back(std::move(row));
  }

  continue_unmt(out.model, opt, x, y, x, y, vocab, cfg, cfg.bt_steps, "bt", 0, &out.history,
                &out.updates, monitor, nullptr);
  stamp_model(out.model, cfg.seed, "m0");
  return out;
}

}  // namespace unmtlab
