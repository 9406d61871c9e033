#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "unmtlab/common.hpp"
#include "unmtlab/corpus.hpp"
#include "unmtlab/seq2seq.hpp"
#include "unmtlab/toylang.hpp"

using namespace unmtlab;

// ---------------------------------------------------------------------------
// Independent central-difference oracle, written before anything else here:
// perturb one raw coordinate through the flat tensor view, evaluate the loss
// twice, and divide. It never touches the analytic backward pass or the
// library's own finite-difference helpers.
// ---------------------------------------------------------------------------
namespace {

double central_difference(const ModelSnapshot& model, const std::vector<Sentence>& src,
                          const std::vector<Sentence>& tgt, TokenId tag, size_t tensor_idx,
                          size_t offset, double h) {
  ModelSnapshot probe = model;
  std::vector<TensorRef> refs = tensor_refs(probe);
  double saved = refs[tensor_idx].data[offset];
  refs[tensor_idx].data[offset] = saved + h;
  double up = loss_only(probe, src, tgt, tag);
  refs[tensor_idx].data[offset] = saved - h;
  double down = loss_only(probe, src, tgt, tag);
  refs[tensor_idx].data[offset] = saved;
  return (up - down) / (2.0 * h);
}

struct TinyBatch {
  std::vector<Sentence> src;
  std::vector<Sentence> tgt;  // wrapped BOS ... EOS
};

TinyBatch tiny_batch(int vocab_size, uint64_t seed, int n_sentences = 3) {
  Rng rng(seed);
  TinyBatch b;
  for (int i = 0; i < n_sentences; ++i) {
    Sentence s, t;
    int slen = 2 + static_cast<int>(rng.index(4));
    int tlen = 2 + static_cast<int>(rng.index(4));
    for (int k = 0; k < slen; ++k) {
      s.push_back(static_cast<TokenId>(Vocab::kNumReserved + rng.index(vocab_size - Vocab::kNumReserved)));
    }
    for (int k = 0; k < tlen; ++k) {
      t.push_back(static_cast<TokenId>(Vocab::kNumReserved + rng.index(vocab_size - Vocab::kNumReserved)));
    }
    b.src.push_back(s);
    b.tgt.push_back(wrap_target(t));
  }
  return b;
}

ModelDims tiny_dims(int vocab_size = 30) {
  ModelDims d;
  d.vocab_size = vocab_size;
  d.embed_dim = 10;
  d.hidden_dim = 12;
  d.max_decode_len = 12;
  return d;
}

}  // namespace

TEST_CASE("analytic gradients match the hand-rolled central-difference oracle") {
  ModelSnapshot model = init_model(tiny_dims(), 1);
  TinyBatch b = tiny_batch(30, 5);
  LossResult res = forward_loss(model, b.src, b.tgt, Vocab::kTagL2);
  ModelSnapshot scratch = model;
  std::vector<TensorRef> grefs = tensor_refs(res.grads);
  std::vector<TensorRef> prefs = tensor_refs(scratch);
  REQUIRE(grefs.size() == prefs.size());

  Rng rng(17);
  double worst = 0.0;
  for (int probe = 0; probe < 60; ++probe) {
    size_t ti = rng.index(grefs.size());
    size_t off = rng.index(grefs[ti].size);
    double numeric = central_difference(model, b.src, b.tgt, Vocab::kTagL2, ti, off, 1e-4);
    double analytic = grefs[ti].data[off];
    worst = std::max(worst, gradient_rel_error(analytic, numeric));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient check passes over ten random model and batch draws") {
  for (uint64_t draw = 0; draw < 10; ++draw) {
    ModelSnapshot model = init_model(tiny_dims(), 100 + draw);
    TinyBatch b = tiny_batch(30, 200 + draw);
    TokenId tag = draw % 2 == 0 ? Vocab::kTagL2 : Vocab::kTagL1;
    double err = grad_check(model, b.src, b.tgt, tag, 1e-4, 50, draw);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("gradient check is stable between step sizes h and 2h") {
  ModelSnapshot model = init_model(tiny_dims(), 2);
  TinyBatch b = tiny_batch(30, 3);
  double e1 = grad_check(model, b.src, b.tgt, Vocab::kTagL2, 1e-4, 50, 11);
  double e2 = grad_check(model, b.src, b.tgt, Vocab::kTagL2, 2e-4, 50, 11);
  REQUIRE(e1 > 0.0);
  REQUIRE(e2 > 0.0);
  double ratio = e1 > e2 ? e1 / e2 : e2 / e1;
  CHECK(ratio < 10.0);
}

TEST_CASE("a corrupted gradient coordinate is flagged loudly") {
  ModelSnapshot model = init_model(tiny_dims(), 4);
  TinyBatch b = tiny_batch(30, 6);
  LossResult res = forward_loss(model, b.src, b.tgt, Vocab::kTagL2);
  std::vector<TensorRef> grefs = tensor_refs(res.grads);

  // find a coordinate carrying real signal, then double it
  size_t ti = 0, off = 0;
  double best = 0.0;
  for (size_t t = 0; t < grefs.size(); ++t) {
    for (size_t i = 0; i < grefs[t].size; ++i) {
      if (std::abs(grefs[t].data[i]) > best) {
        best = std::abs(grefs[t].data[i]);
        ti = t;
        off = i;
      }
    }
  }
  REQUIRE(best > 1e-4);
  double corrupted = grefs[ti].data[off] * 2.0;
  double numeric = central_difference(model, b.src, b.tgt, Vocab::kTagL2, ti, off, 1e-4);
  CHECK(gradient_rel_error(corrupted, numeric) > 0.1);
}

TEST_CASE("step size bounds for the gradient check are enforced") {
  ModelSnapshot model = init_model(tiny_dims(), 5);
  TinyBatch b = tiny_batch(30, 7);
  CHECK_THROWS_AS(grad_check(model, b.src, b.tgt, Vocab::kTagL2, 1e-7), ValidationError);
  CHECK_THROWS_AS(grad_check(model, b.src, b.tgt, Vocab::kTagL2, 1e-2), ValidationError);
}

TEST_CASE("initialization is deterministic with the declared shape and range") {
  ModelDims dims;
  dims.vocab_size = 126;
  dims.embed_dim = 32;
  ModelSnapshot a = init_model(dims, 9);
  ModelSnapshot b = init_model(dims, 9);
  CHECK(a.serialize() == b.serialize());
  ModelSnapshot c = init_model(dims, 10);
  CHECK(a.serialize() != c.serialize());

  // one embedding row per vocabulary entry, 32 dimensions each
  CHECK(a.embed.cols() == 126);
  CHECK(a.embed.rows() == 32);
  CHECK(a.embed.size() == 126 * 32);
  CHECK(a.step == 0);

  ModelSnapshot scratch = a;
  for (const TensorRef& r : tensor_refs(scratch)) {
    for (size_t i = 0; i < r.size; ++i) {
      CHECK(r.data[i] > -0.08);
      CHECK(r.data[i] < 0.08);
    }
  }
}

TEST_CASE("untrained loss on a one-token target approximates log vocab size") {
  ModelDims dims = tiny_dims(40);
  ModelSnapshot model = init_model(dims, 6);
  std::vector<Sentence> src = {{8, 9, 10}};
  std::vector<Sentence> tgt = {wrap_target({11})};  // one real token plus EOS
  double loss = loss_only(model, src, tgt, Vocab::kTagL2);
  double expected = std::log(40.0);
  CHECK(loss > 0.8 * expected);
  CHECK(loss < 1.2 * expected);
}

TEST_CASE("duplicating a pair leaves the mean loss unchanged") {
  ModelSnapshot model = init_model(tiny_dims(), 7);
  std::vector<Sentence> src = {{7, 8}, {9, 10, 11}};
  std::vector<Sentence> tgt = {wrap_target({12, 13}), wrap_target({14})};
  double base = loss_only(model, src, tgt, Vocab::kTagL2);

  std::vector<Sentence> src2 = {src[0], src[1], src[0], src[1]};
  std::vector<Sentence> tgt2 = {tgt[0], tgt[1], tgt[0], tgt[1]};
  double doubled = loss_only(model, src2, tgt2, Vocab::kTagL2);
  CHECK(doubled == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("loss rejects malformed inputs and non-finite parameters") {
  ModelSnapshot model = init_model(tiny_dims(), 8);
  std::vector<Sentence> src = {{7, 8}};
  std::vector<Sentence> tgt = {wrap_target({9})};
  CHECK_THROWS_AS(loss_only(model, src, {}, Vocab::kTagL2), ValidationError);
  CHECK_THROWS_AS(loss_only(model, src, tgt, Vocab::kEos), ValidationError);

  ModelSnapshot broken = model;
  broken.combine_w(0, 0) = std::nan("");
  try {
    loss_only(broken, src, tgt, Vocab::kTagL2);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("combine_w") != std::string::npos);
  }
}

TEST_CASE("optimizer leaves parameters alone on zero gradients") {
  ModelSnapshot model = init_model(tiny_dims(), 11);
  std::vector<uint8_t> before = model.serialize();
  OptState opt = OptState::fresh(model, AdamConfig{});
  Gradients zero = Gradients::zeros_like(model);
  adam_step(opt, model, zero);
  CHECK(model.serialize() == before);
  CHECK(opt.step == 1);
  CHECK(model.step == 1);
}

TEST_CASE("one optimizer step reproduces the hand-evaluated update") {
  // a single coordinate with gradient 1: after bias correction the first
  // step moves the parameter by -lr * 1 / (1 + eps)
  ModelDims dims = tiny_dims();
  ModelSnapshot model = init_model(dims, 12);
  ModelSnapshot reference = model;
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.98;
  cfg.eps = 1e-8;
  OptState opt = OptState::fresh(model, cfg);

  Gradients g = Gradients::zeros_like(model);
  g.combine_b(3) = 1.0;
  adam_step(opt, model, g);

  double expected_delta = -0.1 * (1.0 / (1.0 + 1e-8));
  double actual_delta = model.combine_b(3) - reference.combine_b(3);
  CHECK(actual_delta == doctest::Approx(expected_delta).epsilon(1e-12));
  CHECK(std::abs(actual_delta + 0.1) < 1e-8);

  // every untouched coordinate stays put
  CHECK(model.combine_b(0) == reference.combine_b(0));
  CHECK((model.embed - reference.embed).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("optimizer defaults carry the published momentum constants") {
  AdamConfig cfg;
  CHECK(cfg.beta1 == 0.9);
  CHECK(cfg.beta2 == 0.98);
  CHECK(cfg.lr == 3e-3);
}

TEST_CASE("greedy decoding is deterministic and respects the length cap") {
  ModelSnapshot model = init_model(tiny_dims(), 13);
  std::vector<Sentence> src = {{7, 8, 9}, {10, 11}};
  std::vector<Sentence> out1 = translate(model, src, Vocab::kTagL2);
  std::vector<Sentence> out2 = translate(model, src, Vocab::kTagL2);
  CHECK(out1 == out2);
  for (const auto& s : out1) CHECK(s.size() <= 12);  // dims.max_decode_len

  std::vector<Sentence> capped = translate(model, src, Vocab::kTagL2, 3);
  for (const auto& s : capped) CHECK(s.size() <= 3);

  for (const auto& s : out1) {
    for (TokenId t : s) {
      CHECK(t != Vocab::kPad);
      CHECK(t != Vocab::kBos);
      CHECK(t != Vocab::kTagL1);
      CHECK(t != Vocab::kTagL2);
      CHECK(t != Vocab::kEos);  // EOS terminates, it is never emitted
    }
  }
}

TEST_CASE("decode distributions are normalized at every step") {
  ModelSnapshot model = init_model(tiny_dims(), 14);
  std::vector<Sentence> src = {{7, 8, 9, 10}};
  TranslateTrace trace;
  translate(model, src, Vocab::kTagL2, -1, &trace);
  REQUIRE(trace.step_distributions.size() == 1);
  REQUIRE_FALSE(trace.step_distributions[0].empty());
  for (const auto& dist : trace.step_distributions[0]) {
    CHECK(std::abs(dist.sum() - 1.0) < 1e-6);
    CHECK(dist.minCoeff() >= 0.0);
  }
}

TEST_CASE("argmax ties break toward the lowest token id") {
  // force a tie: two interchangeable output rows with a dominant bias
  ModelDims dims = tiny_dims(20);
  ModelSnapshot model = init_model(dims, 15);
  model.out_w.row(8) = model.out_w.row(12);
  model.out_b(8) = 50.0;
  model.out_b(12) = 50.0;
  std::vector<Sentence> out = translate(model, {{7, 9}}, Vocab::kTagL2, 4);
  REQUIRE_FALSE(out[0].empty());
  for (TokenId t : out[0]) CHECK(t == 8);  // never the tied higher id 12
}

TEST_CASE("translation rejects invalid tags and empty sentences") {
  ModelSnapshot model = init_model(tiny_dims(), 16);
  CHECK_THROWS_AS(translate(model, {{7}}, Vocab::kUnk), ValidationError);
  CHECK_THROWS_AS(translate(model, {{}}, Vocab::kTagL2), ValidationError);
  CHECK(translate(model, {}, Vocab::kTagL2).empty());
}

TEST_CASE("snapshot serialization round-trips bit-exactly") {
  ModelSnapshot model = init_model(tiny_dims(), 17);
  model.step = 41;
  model.model_id = 77;
  std::vector<uint8_t> bytes = model.serialize();
  ModelSnapshot back = ModelSnapshot::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.step == 41);
  CHECK(back.model_id == 77);
  CHECK(back.content_hash() == model.content_hash());

  std::string path = "snapshot_roundtrip_test.bin";
  model.save(path);
  ModelSnapshot loaded = ModelSnapshot::load(path);
  CHECK(loaded.serialize() == bytes);
  std::remove(path.c_str());

  std::vector<Sentence> src = {{7, 8, 9}};
  CHECK(translate(loaded, src, Vocab::kTagL2) == translate(model, src, Vocab::kTagL2));
}

TEST_CASE("two hundred supervised steps cut the toy-corpus loss in half") {
  LanguagePairSpec wspec;
  wspec.content_vocab_size = 24;
  wspec.seed = 3;
  LanguagePair pair = generate_language_pair(wspec);
  Vocab vocab = vocab_from_pair(pair);
  GeneratedCorpora g = generate_corpora(pair, 50, 1, 1, 21);

  // the fixed 50-pair corpus: sources with their reference translations
  std::vector<Sentence> src, tgt;
  for (const auto& s : g.x.sentences) {
    src.push_back(vocab.encode(s));
    tgt.push_back(wrap_target(vocab.encode(oracle_translate(pair, s, Direction::L1ToL2))));
  }

  ModelDims dims;
  dims.vocab_size = static_cast<int>(vocab.size());
  ModelSnapshot model = init_model(dims, 5);
  OptState opt = OptState::fresh(model, AdamConfig{});
  double first = loss_only(model, src, tgt, Vocab::kTagL2);
  for (int step = 0; step < 200; ++step) {
    LossResult res = forward_loss(model, src, tgt, Vocab::kTagL2);
    adam_step(opt, model, res.grads);
  }
  double last = loss_only(model, src, tgt, Vocab::kTagL2);
  CHECK(last < 0.5 * first);
}

TEST_CASE("an overfit snapshot reproduces the reference translations exactly") {
  LanguagePairSpec wspec;
  wspec.content_vocab_size = 24;
  wspec.seed = 4;
  LanguagePair pair = generate_language_pair(wspec);
  Vocab vocab = vocab_from_pair(pair);
  GeneratedCorpora g = generate_corpora(pair, 50, 1, 1, 22);

  std::vector<Sentence> src, tgt;
  std::vector<Sentence> expected;
  for (const auto& s : g.x.sentences) {
    Sentence ref = vocab.encode(oracle_translate(pair, s, Direction::L1ToL2));
    src.push_back(vocab.encode(s));
    tgt.push_back(wrap_target(ref));
    expected.push_back(ref);
  }

  ModelDims dims;
  dims.vocab_size = static_cast<int>(vocab.size());
  ModelSnapshot model = init_model(dims, 6);
  AdamConfig acfg;
  acfg.lr = 0.03;  // overfitting 50 pairs wants a hotter rate than the default
  OptState opt = OptState::fresh(model, acfg);

  bool exact = false;
  for (int step = 1; step <= 1200 && !exact; ++step) {
    LossResult res = forward_loss(model, src, tgt, Vocab::kTagL2);
    adam_step(opt, model, res.grads);
    if (step % 50 == 0) {
      exact = translate(model, src, Vocab::kTagL2) == expected;
    }
  }
  CHECK(exact);
}
