#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "unmtlab/common.hpp"
#include "unmtlab/corpus.hpp"
#include "unmtlab/eval.hpp"
#include "unmtlab/selftrain.hpp"
#include "unmtlab/toylang.hpp"
#include "unmtlab/unmt.hpp"

using namespace unmtlab;

namespace {

// One small bilingual workspace shared by the trainer tests.
struct World {
  LanguagePair pair;
  Vocab vocab;
  MonoCorpus x, y;
  EvalSet eval;
  ModelDims dims;

  explicit World(size_t n_x = 300, size_t n_y = 300, uint64_t seed = 31,
                 int content_words = 24) {
    LanguagePairSpec wspec;
    wspec.content_vocab_size = content_words;
    wspec.seed = Rng::derive(seed, "world");
    pair = generate_language_pair(wspec);
    vocab = vocab_from_pair(pair);
    GeneratedCorpora text = generate_corpora(pair, n_x, n_y, 80, Rng::derive(seed, "text"));
    x = clean(encode_corpus(vocab, text.x));
    y = clean(encode_corpus(vocab, text.y));
    y.lang = LangId::L2;
    eval = make_eval_set(vocab, text.test, 60);
    dims.vocab_size = static_cast<int>(vocab.size());
  }
};

UnmtConfig small_config(int warm, int bt, uint64_t seed = 7) {
  UnmtConfig cfg;
  cfg.warmstart_steps = warm;
  cfg.bt_steps = bt;
  cfg.batch_size_tokens = 300;
  cfg.optim.lr = 0.02;
  cfg.eval_every = 50;
  cfg.seed = seed;
  return cfg;
}

double copy_accuracy(const ModelSnapshot& model, const Vocab& vocab,
                     const std::vector<Sentence>& sentences, TokenId tag) {
  std::vector<Sentence> out = translate(model, sentences, tag);
  size_t correct = 0, total = 0;
  for (size_t i = 0; i < sentences.size(); ++i) {
    total += sentences[i].size();
    size_t upto = std::min(out[i].size(), sentences[i].size());
    for (size_t k = 0; k < upto; ++k) {
      if (out[i][k] == sentences[i][k]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("config validation enforces the declared bounds") {
  UnmtConfig cfg;
  cfg.validate();  // defaults are valid
  CHECK(cfg.warmstart_steps == 500);
  CHECK(cfg.bt_steps == 3000);
  CHECK(cfg.batch_size_tokens == 500);

  UnmtConfig bad = cfg;
  bad.warmstart_steps = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.eval_every = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.batch_size_tokens = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("a zero-noise denoising step is a copy-task update") {
  World w(60, 60);
  ModelSnapshot model = init_model(w.dims, 1);
  OptState opt = OptState::fresh(model, AdamConfig{});
  NoiseSpec zero{0.0, 0.0, 0};
  Rng rng(5);
  std::vector<Sentence> batch(w.x.sentences.begin(), w.x.sentences.begin() + 8);
  uint64_t step_before = model.step;
  double loss = dae_step(model, opt, batch, LangId::L1, w.vocab, zero, rng);
  CHECK(loss > 0.0);  // untrained cross-entropy is strictly positive
  CHECK(std::isfinite(loss));
  CHECK(model.step == step_before + 1);

  // with zero noise the training pair is (sentence, sentence): the same
  // update must come out of the plain supervised path
  ModelSnapshot model2 = init_model(w.dims, 1);
  OptState opt2 = OptState::fresh(model2, AdamConfig{});
  std::vector<std::pair<Sentence, Sentence>> pairs;
  for (const auto& s : batch) pairs.emplace_back(s, s);
  double loss2 = supervised_step(model2, opt2, pairs, LangId::L1, w.vocab);
  CHECK(loss == doctest::Approx(loss2).epsilon(1e-12));
  CHECK(model.serialize() == model2.serialize());
}

TEST_CASE("three hundred denoising steps teach held-out copying") {
  World w(2000, 2000, 77);
  UnmtConfig cfg = small_config(300, 0, 13);
  cfg.batch_size_tokens = 1000;
  TrainResult res = train_unmt(w.dims, w.x, w.y, w.vocab, cfg, nullptr);
  double acc_l1 = copy_accuracy(res.model, w.vocab, w.eval.src_l1, Vocab::kTagL1);
  double acc_l2 = copy_accuracy(res.model, w.vocab, w.eval.src_l2, Vocab::kTagL2);
  CHECK(acc_l1 > 0.9);
  CHECK(acc_l2 > 0.9);
}

TEST_CASE("generation inside a back-translation step uses the frozen model") {
  World w(120, 120);
  ModelSnapshot model = init_model(w.dims, 3);
  OptState opt = OptState::fresh(model, AdamConfig{});
  ModelSnapshot before = model;  // parameters at step entry

  std::vector<Sentence> batch(w.x.sentences.begin(), w.x.sentences.begin() + 6);
  BtStepInfo info = backtranslation_step(model, opt, batch, LangId::L1, w.vocab);

  // what the step decoded equals what the pre-step snapshot decodes
  std::vector<Sentence> frozen_decode = translate(before, batch, Vocab::kTagL2);
  for (auto& s : frozen_decode) {
    if (s.empty()) s.push_back(Vocab::kUnk);
  }
  CHECK(info.generated == frozen_decode);
  CHECK(info.generator_model_id == before.model_id);
  CHECK(std::isfinite(info.loss));
}

TEST_CASE("a back-translation step is generation plus one supervised update") {
  World w(120, 120);
  ModelSnapshot model_a = init_model(w.dims, 4);
  OptState opt_a = OptState::fresh(model_a, AdamConfig{});
  std::vector<Sentence> batch(w.y.sentences.begin(), w.y.sentences.begin() + 6);
  BtStepInfo info = backtranslation_step(model_a, opt_a, batch, LangId::L2, w.vocab);

  ModelSnapshot model_b = init_model(w.dims, 4);
  OptState opt_b = OptState::fresh(model_b, AdamConfig{});
  std::vector<Sentence> gen = translate(model_b, batch, Vocab::kTagL1);
  std::vector<std::pair<Sentence, Sentence>> pairs;
  for (size_t i = 0; i < batch.size(); ++i) {
    Sentence src = gen[i].empty() ? Sentence{Vocab::kUnk} : gen[i];
    pairs.emplace_back(src, batch[i]);
  }
  double sup_loss = supervised_step(model_b, opt_b, pairs, LangId::L2, w.vocab);

  CHECK(info.loss == doctest::Approx(sup_loss).epsilon(1e-12));
  CHECK(model_a.serialize() == model_b.serialize());
}

TEST_CASE("generation does not disturb optimizer moments") {
  World w(120, 120);
  ModelSnapshot model = init_model(w.dims, 5);
  OptState opt = OptState::fresh(model, AdamConfig{});
  // seed the moments with one real update so they are nonzero
  std::vector<Sentence> batch(w.x.sentences.begin(), w.x.sentences.begin() + 4);
  NoiseSpec noise;
  Rng rng(9);
  dae_step(model, opt, batch, LangId::L1, w.vocab, noise, rng);

  Gradients m_before = opt.m;
  uint64_t steps_before = opt.step;
  ModelTranslator frozen(model, w.vocab);
  frozen.translate_batch(batch, LangId::L2);  // a pure generation pass
  CHECK(opt.step == steps_before);
  std::vector<TensorRef> now = tensor_refs(opt.m);
  std::vector<TensorRef> saved = tensor_refs(m_before);
  for (size_t t = 0; t < now.size(); ++t) {
    for (size_t i = 0; i < now[t].size; ++i) {
      CHECK(now[t].data[i] == saved[t].data[i]);
    }
  }
}

TEST_CASE("a cheat-oracle generator turns back-translation into supervised training") {
  World w(120, 120);
  OracleTranslator oracle(w.pair, w.vocab, 99);

  ModelSnapshot model_a = init_model(w.dims, 6);
  OptState opt_a = OptState::fresh(model_a, AdamConfig{});
  std::vector<Sentence> batch(w.x.sentences.begin(), w.x.sentences.begin() + 6);
  BtStepInfo info = backtranslation_step(model_a, opt_a, batch, LangId::L1, w.vocab, &oracle);
  CHECK(info.generator_model_id == 99);

  // the synthetic sources are the exact reference translations
  for (size_t i = 0; i < batch.size(); ++i) {
    RawSentence raw = w.vocab.decode(batch[i]);
    Sentence ref = w.vocab.encode(oracle_translate(w.pair, raw, Direction::L1ToL2));
    CHECK(info.generated[i] == ref);
  }

  // so the whole step equals supervised training on true pairs
  ModelSnapshot model_b = init_model(w.dims, 6);
  OptState opt_b = OptState::fresh(model_b, AdamConfig{});
  std::vector<std::pair<Sentence, Sentence>> pairs;
  for (size_t i = 0; i < batch.size(); ++i) pairs.emplace_back(info.generated[i], batch[i]);
  supervised_step(model_b, opt_b, pairs, LangId::L1, w.vocab);
  CHECK(model_a.serialize() == model_b.serialize());
}

TEST_CASE("the joint loop runs two back-translation terms per step") {
  World w(150, 150);
  UnmtConfig cfg = small_config(3, 4);
  TrainResult res = train_unmt(w.dims, w.x, w.y, w.vocab, cfg, nullptr);

  int joint_rows = 0;
  for (const auto& row : res.history.rows) {
    if (row.phase == "bt") {
      ++joint_rows;
      CHECK(std::isfinite(row.loss_xy));  // one term per direction, every step
      CHECK(std::isfinite(row.loss_yx));
      CHECK(std::isfinite(row.dae_loss_x));
      CHECK(std::isfinite(row.dae_loss_y));
    }
  }
  CHECK(joint_rows == 4);

  // audit trail: per joint step exactly one bt_xy and one bt_yx update
  std::map<int, std::set<std::string>> kinds_by_step;
  for (const auto& u : res.updates) {
    if (u.phase == "bt") kinds_by_step[u.step].insert(u.kind);
  }
  CHECK(kinds_by_step.size() == 4);
  for (const auto& [step, kinds] : kinds_by_step) {
    CHECK(kinds.count("bt_xy") == 1);
    CHECK(kinds.count("bt_yx") == 1);
    CHECK(kinds.count("dae_x") == 1);
    CHECK(kinds.count("dae_y") == 1);
  }
}

TEST_CASE("history steps increase strictly across phases") {
  World w(150, 150);
  UnmtConfig cfg = small_config(5, 5);
  TrainResult res = train_unmt(w.dims, w.x, w.y, w.vocab, cfg, &w.eval);
  REQUIRE(res.history.rows.size() == 10);
  for (size_t i = 0; i < res.history.rows.size(); ++i) {
    CHECK(res.history.rows[i].step == static_cast<int>(i) + 1);
  }
}

TEST_CASE("training is deterministic for a fixed config and seed") {
  World w(150, 150);
  UnmtConfig cfg = small_config(4, 4);
  TrainResult a = train_unmt(w.dims, w.x, w.y, w.vocab, cfg, &w.eval);
  TrainResult b = train_unmt(w.dims, w.x, w.y, w.vocab, cfg, &w.eval);
  CHECK(a.model.serialize() == b.model.serialize());
  REQUIRE(a.history.rows.size() == b.history.rows.size());
  for (size_t i = 0; i < a.history.rows.size(); ++i) {
    const HistoryRow& ra = a.history.rows[i];
    const HistoryRow& rb = b.history.rows[i];
    CHECK(ra.phase == rb.phase);
    CHECK(ra.step == rb.step);
    // NaN columns must agree as NaN, numeric columns exactly
    auto same = [](double x, double y) {
      return (std::isnan(x) && std::isnan(y)) || x == y;
    };
    CHECK(same(ra.dae_loss_x, rb.dae_loss_x));
    CHECK(same(ra.dae_loss_y, rb.dae_loss_y));
    CHECK(same(ra.loss_xy, rb.loss_xy));
    CHECK(same(ra.loss_yx, rb.loss_yx));
    CHECK(same(ra.bleu_xy, rb.bleu_xy));
    CHECK(same(ra.bleu_yx, rb.bleu_yx));
  }

  UnmtConfig other = small_config(4, 4, 8);
  TrainResult c = train_unmt(w.dims, w.x, w.y, w.vocab, other, &w.eval);
  CHECK(a.model.serialize() != c.model.serialize());
}

TEST_CASE("the history CSV has the pinned column layout") {
  World w(150, 150);
  UnmtConfig cfg = small_config(2, 2);
  TrainResult res = train_unmt(w.dims, w.x, w.y, w.vocab, cfg, nullptr);
  std::string path = "history_csv_test.csv";
  res.history.save_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "phase,epoch,step,dae_loss_x,dae_loss_y,bt_loss_xy,bt_loss_yx,bleu_xy,bleu_yx");
  size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == res.history.rows.size());
  in.close();
  std::remove(path.c_str());
}

TEST_CASE("empty corpora and invalid configs are rejected") {
  World w(60, 60);
  MonoCorpus empty;
  empty.lang = LangId::L1;
  UnmtConfig cfg = small_config(1, 1);
  CHECK_THROWS_AS(train_unmt(w.dims, empty, w.y, w.vocab, cfg, nullptr), ValidationError);
  UnmtConfig bad = cfg;
  bad.eval_every = -5;
  CHECK_THROWS_AS(train_unmt(w.dims, w.x, w.y, w.vocab, bad, nullptr), ValidationError);
}

TEST_CASE("without back-translation the model only copies or anchors") {
  World w(800, 800, 55);
  UnmtConfig cfg = small_config(150, 0, 19);
  cfg.batch_size_tokens = 600;
  TrainResult res = train_unmt(w.dims, w.x, w.y, w.vocab, cfg, nullptr);

  // the copy floor: score the sources as their own translations
  std::vector<RawSentence> copy_hyp;
  for (const auto& s : w.eval.src_l1) copy_hyp.push_back(w.vocab.decode(s));
  double copy_floor = bleu(copy_hyp, w.eval.ref_l2).score;

  std::vector<Sentence> decoded = translate(res.model, w.eval.src_l1, Vocab::kTagL2);
  std::vector<RawSentence> hyp;
  for (const auto& s : decoded) hyp.push_back(w.vocab.decode(s));
  double dae_only = bleu(hyp, w.eval.ref_l2).score;

  // a pure denoiser cannot beat the copy/anchor floor by any real margin
  CHECK(dae_only <= copy_floor + 5.0);
}

TEST_CASE("back-translation after the warm start adds real signal across seeds") {
  // three seeded runs: the full loop must beat its own warm-start-only
  // checkpoint on the same held-out set
  double full_sum = 0.0, warm_sum = 0.0;
  for (uint64_t seed : {101, 102, 103}) {
    World w(1200, 1200, seed);
    UnmtConfig cfg = small_config(150, 220, Rng::derive(seed, "cfg"));
    cfg.batch_size_tokens = 700;
    cfg.noise.p_blank = 0.3;  // the cloze pressure the bootstrap needs
    cfg.eval_every = 10000;   // no mid-run scoring; endpoints scored below

    UnmtConfig warm_only = cfg;
    warm_only.bt_steps = 0;
    TrainResult warm = train_unmt(w.dims, w.x, w.y, w.vocab, warm_only, nullptr);
    EvalScores warm_scores = evaluate_model(warm.model, w.vocab, w.eval);

    TrainResult full = train_unmt(w.dims, w.x, w.y, w.vocab, cfg, nullptr);
    EvalScores full_scores = evaluate_model(full.model, w.vocab, w.eval);

    warm_sum += 0.5 * (warm_scores.bleu_xy + warm_scores.bleu_yx);
    full_sum += 0.5 * (full_scores.bleu_xy + full_scores.bleu_yx);
  }
  CHECK(full_sum / 3.0 > warm_sum / 3.0);
}
