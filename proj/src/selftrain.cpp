#include "unmtlab/selftrain.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "unmtlab/eval.hpp"

namespace unmtlab {

void SelfTrainConfig::validate() const {
  if (!(epsilon > 0.0) || epsilon > 1.0) throw ValidationError("epsilon must be in (0, 1]");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (steps_per_epoch < 1) throw ValidationError("steps_per_epoch must be >= 1");
  unmt.validate();
}

std::vector<Sentence> translate_all(const Translator& generator,
                                    const std::vector<Sentence>& src, LangId target_lang,
                                    size_t chunk_size) {
  std::vector<Sentence> out;
  out.reserve(src.size());
  for (size_t begin = 0; begin < src.size(); begin += chunk_size) {
    size_t end = std::min(src.size(), begin + chunk_size);
    std::vector<Sentence> part(src.begin() + static_cast<ptrdiff_t>(begin),
                               src.begin() + static_cast<ptrdiff_t>(end));
    auto hyp = generator.translate_batch(part, target_lang);
    out.insert(out.end(), hyp.begin(), hyp.end());
  }
  return out;
}

SyntheticParallel generate_synthetic_parallel(const Translator& generator,
                                              const MonoCorpus& source, double epsilon,
                                              uint64_t seed) {
  SyntheticParallel out;
  MonoCorpus sub = subsample(source, epsilon, seed, &out.source_indices);
  out.generator_model_id = generator.model_id();
  auto hyp = translate_all(generator, sub.sentences, other_lang(source.lang), 256);
  out.pairs.resize(sub.sentences.size());
  for (size_t i = 0; i < sub.sentences.size(); ++i) {
    if (hyp[i].empty()) hyp[i].push_back(Vocab::kUnk);
    out.pairs[i] = {sub.sentences[i], std::move(hyp[i])};
  }
  return out;
}

std::vector<Sentence> generate_synthetic_mono(const Translator& generator,
                                              const MonoCorpus& source, double epsilon,
                                              uint64_t seed, std::vector<size_t>* picked) {
  SyntheticParallel par = generate_synthetic_parallel(generator, source, epsilon, seed);
  if (picked != nullptr) *picked = par.source_indices;
  std::vector<Sentence> out;
  out.reserve(par.pairs.size());
  for (auto& p : par.pairs) out.push_back(std::move(p.second));
  return out;
}

StPtCorpora generate_st_pt_corpora(const Translator& generator, const MonoCorpus& x,
                                   const MonoCorpus& y, double epsilon, uint64_t seed) {
  if (x.lang != LangId::L1 || y.lang != LangId::L2) {
    throw ValidationError("projection corpora expect x in L1 and y in L2");
  }
  StPtCorpora out;
  out.x_sub = generate_synthetic_parallel(generator, x, epsilon, Rng::derive(seed, "sub_x"));
  out.y_all = generate_synthetic_parallel(generator, y, 1.0, Rng::derive(seed, "all_y"));
  return out;
}

namespace {

void check_inputs(const ModelSnapshot& start, const MonoCorpus& x, const MonoCorpus& y,
                  const Vocab& vocab, const SelfTrainConfig& cfg) {
  cfg.validate();
  start.dims.validate();
  if (static_cast<size_t>(start.dims.vocab_size) != vocab.size()) {
    throw ValidationError("model vocabulary size does not match the vocabulary");
  }
  x.validate(vocab.size());
  y.validate(vocab.size());
  if (x.lang != LangId::L1 || y.lang != LangId::L2) {
    throw ValidationError("self-training expects x in L1 and y in L2");
  }
}

void record_scores(StResult& out, const Vocab& vocab, const EvalSet* monitor, int epoch) {
  if (monitor == nullptr) return;
  EvalScores s = evaluate_model(out.model, vocab, *monitor);
  out.epoch_scores.push_back({epoch, s.bleu_xy, s.bleu_yx});
}

}  // namespace

StResult train_st_ut(const ModelSnapshot& start, const MonoCorpus& x, const MonoCorpus& y,
                     const Vocab& vocab, const SelfTrainConfig& cfg, const EvalSet* monitor,
                     const Translator* generator_override) {
  check_inputs(start, x, y, vocab, cfg);
  StResult out;
  out.model = start;
  OptState opt = OptState::fresh(out.model, cfg.unmt.optim);
  out.epoch_model_ids.push_back(out.model.model_id);
  record_scores(out, vocab, monitor, 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.opt_reset == OptReset::ResetEachEpoch) {
      opt = OptState::fresh(out.model, cfg.unmt.optim);
    }
    ModelSnapshot frozen = out.model;
    ModelTranslator self_generator(frozen, vocab);
    const Translator* generator =
        generator_override != nullptr ? generator_override : &self_generator;
    if (cfg.warm_start == WarmStart::Reinit) {
      // "New model" reading: the epoch trains from scratch while the frozen
      // previous model still supplies the synthetic data.
      out.model = init_model(out.model.dims,
                             Rng::derive(cfg.unmt.seed, "st_ut/reinit/" + std::to_string(epoch)));
      opt = OptState::fresh(out.model, cfg.unmt.optim);
    }

    uint64_t sub_seed =
        Rng::derive(cfg.unmt.seed, "st_ut/subsample/" + std::to_string(epoch));
    SyntheticParallel syn = generate_synthetic_parallel(*generator, x, cfg.epsilon, sub_seed);
    out.records.push_back({epoch, "y_from_x_sub", syn.generator_model_id,
                           syn.source_indices, syn.pairs.size()});
    out.record_pairs.push_back(syn.pairs);

    MonoCorpus bt_y_pool;
    bt_y_pool.lang = LangId::L2;
    bt_y_pool.origin = Origin::Synthetic;  // mixed pool: natural y plus synthetic
    bt_y_pool.sentences = y.sentences;
    bt_y_pool.sentences.reserve(y.sentences.size() + syn.pairs.size());
    for (const auto& p : syn.pairs) bt_y_pool.sentences.push_back(p.second);

    continue_unmt(out.model, opt, x, y, x, bt_y_pool, vocab, cfg.unmt, cfg.steps_per_epoch,
                  "st_ut", epoch, &out.history, &out.updates, monitor, nullptr);

    stamp_model(out.model, cfg.unmt.seed, "st_ut/epoch/" + std::to_string(epoch));
    out.epoch_model_ids.push_back(out.model.model_id);
    record_scores(out, vocab, monitor, epoch);
  }
  return out;
}

StResult train_st_pt(const ModelSnapshot& start, const MonoCorpus& x, const MonoCorpus& y,
                     const Vocab& vocab, const SelfTrainConfig& cfg, const EvalSet* monitor,
                     const Translator* generator_override) {
  check_inputs(start, x, y, vocab, cfg);
  StResult out;
  out.model = start;
  OptState opt = OptState::fresh(out.model, cfg.unmt.optim);
  out.epoch_model_ids.push_back(out.model.model_id);
  record_scores(out, vocab, monitor, 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.opt_reset == OptReset::ResetEachEpoch) {
      opt = OptState::fresh(out.model, cfg.unmt.optim);
    }
    ModelSnapshot frozen = out.model;
    ModelTranslator self_generator(frozen, vocab);
    const Translator* generator =
        generator_override != nullptr ? generator_override : &self_generator;
    if (cfg.warm_start == WarmStart::Reinit) {
      out.model = init_model(out.model.dims,
                             Rng::derive(cfg.unmt.seed, "st_pt/reinit/" + std::to_string(epoch)));
      opt = OptState::fresh(out.model, cfg.unmt.optim);
    }

    uint64_t epoch_seed = Rng::derive(cfg.unmt.seed, "st_pt/" + std::to_string(epoch));
    StPtCorpora gen = generate_st_pt_corpora(*generator, x, y, cfg.epsilon, epoch_seed);
    SyntheticParallel& a = gen.x_sub;
    SyntheticParallel& b = gen.y_all;
    out.records.push_back(
        {epoch, "y_from_x_sub", a.generator_model_id, a.source_indices, a.pairs.size()});
    out.record_pairs.push_back(a.pairs);
    out.records.push_back(
        {epoch, "x_from_y_all", b.generator_model_id, b.source_indices, b.pairs.size()});
    out.record_pairs.push_back(b.pairs);

    ParallelCorpus corpus_a;  // (x natural, y synthetic)
    corpus_a.src_lang = LangId::L1;
    corpus_a.tgt_lang = LangId::L2;
    corpus_a.origin = Origin::Synthetic;
    corpus_a.pairs = a.pairs;
    ParallelCorpus corpus_b;  // (x synthetic, y natural), normalized to L1 -> L2
    corpus_b.src_lang = LangId::L1;
    corpus_b.tgt_lang = LangId::L2;
    corpus_b.origin = Origin::Synthetic;
    corpus_b.pairs.resize(b.pairs.size());
    for (size_t i = 0; i < b.pairs.size(); ++i) {
      corpus_b.pairs[i] = {b.pairs[i].second, b.pairs[i].first};
    }

    PairStream stream_a(std::move(corpus_a), cfg.unmt.batch_size_tokens,
                        Rng::derive(epoch_seed, "stream_a"), "synthetic");
    PairStream stream_b(std::move(corpus_b), cfg.unmt.batch_size_tokens,
                        Rng::derive(epoch_seed, "stream_b"), "synthetic");

    auto reversed = [](const std::vector<std::pair<Sentence, Sentence>>& pairs) {
      std::vector<std::pair<Sentence, Sentence>> r(pairs.size());
      for (size_t i = 0; i < pairs.size(); ++i) r[i] = {pairs[i].second, pairs[i].first};
      return r;
    };

    for (int step = 1; step <= cfg.steps_per_epoch; ++step) {
      int row_step = static_cast<int>(out.history.rows.size()) + 1;
      HistoryRow row;
      row.phase = "st_pt";
      row.epoch = epoch;
      row.step = row_step;
      const ParallelBatch& ba = stream_a.next();
      double l1 = supervised_step(out.model, opt, ba.pairs, LangId::L2, vocab);
      out.updates.push_back({"st_pt", epoch, row_step, "sup_xy_sub", stream_a.pool_tag(), l1});
      double l2 = supervised_step(out.model, opt, reversed(ba.pairs), LangId::L1, vocab);
      out.updates.push_back({"st_pt", epoch, row_step, "sup_yx_sub", stream_a.pool_tag(), l2});
      const ParallelBatch& bb = stream_b.next();
      double l3 = supervised_step(out.model, opt, bb.pairs, LangId::L2, vocab);
      out.updates.push_back({"st_pt", epoch, row_step, "sup_xy_all", stream_b.pool_tag(), l3});
      double l4 = supervised_step(out.model, opt, reversed(bb.pairs), LangId::L1, vocab);
      out.updates.push_back({"st_pt", epoch, row_step, "sup_yx_all", stream_b.pool_tag(), l4});
      row.loss_xy = 0.5 * (l1 + l3);
      row.loss_yx = 0.5 * (l2 + l4);
      if (monitor != nullptr &&
          (step % cfg.unmt.eval_every == 0 || step == cfg.steps_per_epoch)) {
        EvalScores s = evaluate_model(out.model, vocab, *monitor);
        row.bleu_xy = s.bleu_xy;
        row.bleu_yx = s.bleu_yx;
      }
      out.history.rows.push_back(std::move(row));
    }

    stamp_model(out.model, cfg.unmt.seed, "st_pt/epoch/" + std::to_string(epoch));
    out.epoch_model_ids.push_back(out.model.model_id);
    record_scores(out, vocab, monitor, epoch);
  }
  return out;
}

StResult train_baseline_extra(const ModelSnapshot& start, const MonoCorpus& x,
                              const MonoCorpus& y, const Vocab& vocab,
                              const SelfTrainConfig& cfg, const EvalSet* monitor) {
  check_inputs(start, x, y, vocab, cfg);
  StResult out;
  out.model = start;
  OptState opt = OptState::fresh(out.model, cfg.unmt.optim);
  out.epoch_model_ids.push_back(out.model.model_id);
  record_scores(out, vocab, monitor, 0);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.opt_reset == OptReset::ResetEachEpoch) {
      opt = OptState::fresh(out.model, cfg.unmt.optim);
    }
    continue_unmt(out.model, opt, x, y, x, y, vocab, cfg.unmt, cfg.steps_per_epoch,
                  "baseline_extra_steps", epoch, &out.history, &out.updates, monitor, nullptr);
    stamp_model(out.model, cfg.unmt.seed, "baseline_extra/epoch/" + std::to_string(epoch));
    out.epoch_model_ids.push_back(out.model.model_id);
    record_scores(out, vocab, monitor, epoch);
  }
  return out;
}

StResult train_supervised(const ModelSnapshot& start, const ParallelCorpus& data,
                          const Vocab& vocab, const UnmtConfig& cfg, int steps,
                          const EvalSet* monitor) {
  cfg.validate();
  start.dims.validate();
  data.validate(vocab.size());
  if (data.src_lang != LangId::L1 || data.tgt_lang != LangId::L2) {
    throw ValidationError("supervised training expects pairs oriented L1 -> L2");
  }
  if (steps < 1) throw ValidationError("steps must be >= 1");
  StResult out;
  out.model = start;
  OptState opt = OptState::fresh(out.model, cfg.optim);
  out.epoch_model_ids.push_back(out.model.model_id);
  record_scores(out, vocab, monitor, 0);
  std::string tag = data.origin == Origin::Synthetic ? "synthetic" : "natural";
  PairStream stream(data, cfg.batch_size_tokens, Rng::derive(cfg.seed, "supervised"), tag);
  for (int step = 1; step <= steps; ++step) {
    int row_step = static_cast<int>(out.history.rows.size()) + 1;
    HistoryRow row;
    row.phase = "supervised";
    row.epoch = 1;
    row.step = row_step;
    const ParallelBatch& batch = stream.next();
    row.loss_xy = supervised_step(out.model, opt, batch.pairs, LangId::L2, vocab);
    out.updates.push_back({"supervised", 1, row_step, "sup_xy", stream.pool_tag(), row.loss_xy});
    std::vector<std::pair<Sentence, Sentence>> rev(batch.pairs.size());
    for (size_t i = 0; i < batch.pairs.size(); ++i) {
      rev[i] = {batch.pairs[i].second, batch.pairs[i].first};
    }
    row.loss_yx = supervised_step(out.model, opt, rev, LangId::L1, vocab);
    out.updates.push_back({"supervised", 1, row_step, "sup_yx", stream.pool_tag(), row.loss_yx});
    if (monitor != nullptr && (step % cfg.eval_every == 0 || step == steps)) {
      EvalScores s = evaluate_model(out.model, vocab, *monitor);
      row.bleu_xy = s.bleu_xy;
      row.bleu_yx = s.bleu_yx;
    }
    out.history.rows.push_back(std::move(row));
  }
  stamp_model(out.model, cfg.seed, "supervised/final");
  out.epoch_model_ids.push_back(out.model.model_id);
  record_scores(out, vocab, monitor, 1);
  return out;
}

std::vector<Sentence> OracleTranslator::translate_batch(const std::vector<Sentence>& src,
                                                        LangId target_lang) const {
  Direction dir = target_lang == LangId::L2 ? Direction::L1ToL2 : Direction::L2ToL1;
  std::vector<Sentence> out(src.size());
  for (size_t i = 0; i < src.size(); ++i) {
    RawSentence surface = vocab_.decode(src[i]);
    out[i] = vocab_.encode(oracle_translate(pair_, surface, dir));
  }
  return out;
}

void save_synthetic_records(const StResult& result, const Vocab& vocab,
                            const std::string& dir) {
  if (result.records.size() != result.record_pairs.size()) {
    throw ValidationError("records and record pairs are out of step");
  }
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  for (size_t i = 0; i < result.records.size(); ++i) {
    const SyntheticRecord& rec = result.records[i];
    std::string base = "epoch" + std::to_string(rec.epoch) + "_" + rec.kind;
    std::string src_file = base + ".src.txt";
    std::string tgt_file = base + ".tgt.txt";
    std::ofstream fs(dir + "/" + src_file), ft(dir + "/" + tgt_file);
    if (!fs || !ft) throw IoError("cannot open record files under: " + dir);
    for (const auto& p : result.record_pairs[i]) {
      fs << join_tokens(vocab.decode(p.first)) << '\n';
      ft << join_tokens(vocab.decode(p.second)) << '\n';
    }
    manifest.push_back({{"epoch", rec.epoch},
                        {"kind", rec.kind},
                        {"generator_model_id", rec.generator_model_id},
                        {"pairs", rec.pair_count},
                        {"source_indices", rec.source_indices},
                        {"src_file", src_file},
                        {"tgt_file", tgt_file}});
  }
  std::ofstream fm(dir + "/manifest.json");
  if (!fm) throw IoError("cannot open manifest under: " + dir);
  fm << manifest.dump(2) << '\n';
}

}  // namespace unmtlab
