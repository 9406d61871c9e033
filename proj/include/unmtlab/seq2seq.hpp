#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "unmtlab/common.hpp"
#include "unmtlab/corpus.hpp"

namespace unmtlab {

struct ModelDims {
  int vocab_size = 0;
  int embed_dim = 32;
  int hidden_dim = 64;
  int max_decode_len = 16;
  bool use_attention = true;  // dot-product attention over encoder states
  bool tie_output = false;    // reuse the embedding table as output projection

  void validate() const;
};

struct GruParams {
  Eigen::MatrixXd w_z, u_z, w_r, u_r, w_h, u_h;
  Eigen::VectorXd b_z, b_r, b_h;
};

// All parameter tensors of the shared two-direction translation model:
// one embedding table (encoder and decoder inputs), gated-recurrent encoder
// and decoder, a combine layer over [decoder state; context], and an output
// projection (separate, or tied to the embeddings).
struct ModelSnapshot {
  ModelDims dims;
  Eigen::MatrixXd embed;      // (E, V)
  GruParams enc, dec;
  Eigen::MatrixXd combine_w;  // (H, 2H)
  Eigen::VectorXd combine_b;
  Eigen::MatrixXd out_w;      // (V, H); 0x0 when tie_output
  Eigen::VectorXd out_b;
  uint64_t step = 0;
  uint64_t model_id = 0;

  void save(const std::string& path) const;
  static ModelSnapshot load(const std::string& path);
  std::vector<uint8_t> serialize() const;
  static ModelSnapshot deserialize(const std::vector<uint8_t>& bytes);
  uint64_t content_hash() const;  // FNV-1a over the serialized bytes
};

struct Gradients {
  Eigen::MatrixXd embed;
  GruParams enc, dec;
  Eigen::MatrixXd combine_w;
  Eigen::VectorXd combine_b;
  Eigen::MatrixXd out_w;
  Eigen::VectorXd out_b;

  static Gradients zeros_like(const ModelSnapshot& model);
};

// Named flat view over every tensor; shared by the optimizer, the snapshot
// serializer and the finite-difference harness so they can never disagree
// on parameter order.
struct TensorRef {
  std::string name;
  double* data;
  size_t size;
};
std::vector<TensorRef> tensor_refs(ModelSnapshot& m);
std::vector<TensorRef> tensor_refs(Gradients& g);
size_t param_count(const ModelSnapshot& m);

ModelSnapshot init_model(const ModelDims& dims, uint64_t seed);

Sentence wrap_target(const Sentence& s);  // BOS ... EOS

struct LossResult {
  double loss = 0.0;      // mean cross-entropy per real target token
  size_t real_tokens = 0;
  Gradients grads;
};

// Teacher-forced loss and analytic gradients. Targets arrive wrapped
// BOS...EOS; the BOS input position is replaced by the target language tag,
// which is how one shared model serves both directions. PAD positions are
// masked out of the loss.
LossResult forward_loss(const ModelSnapshot& model, const std::vector<Sentence>& src,
                        const std::vector<Sentence>& tgt_wrapped, TokenId target_tag);

double loss_only(const ModelSnapshot& model, const std::vector<Sentence>& src,
                 const std::vector<Sentence>& tgt_wrapped, TokenId target_tag);

struct AdamConfig {
  double lr = 3e-3;  // toy default; the large-model setting 1e-4 also works
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

struct OptState {
  AdamConfig cfg;
  Gradients m, v;
  uint64_t step = 0;

  static OptState fresh(const ModelSnapshot& model, const AdamConfig& cfg);
};

// Bias-corrected Adam update; increments both the optimizer and model step.
void adam_step(OptState& opt, ModelSnapshot& model, const Gradients& grads);

struct TranslateTrace {
  // per sentence, per emitted step: the full output distribution
  std::vector<std::vector<Eigen::VectorXd>> step_distributions;
};

// Greedy argmax decoding toward the tagged language. Ties break toward the
// lowest token id; PAD/BOS and the language tags are never emitted; decoding
// stops at EOS or max_len (dims.max_decode_len when max_len < 0).
std::vector<Sentence> translate(const ModelSnapshot& model, const std::vector<Sentence>& src,
                                TokenId target_tag, int max_len = -1,
                                TranslateTrace* trace = nullptr);

// Central-difference probe of one flat parameter coordinate.
double fd_gradient(const ModelSnapshot& model, const std::vector<Sentence>& src,
                   const std::vector<Sentence>& tgt_wrapped, TokenId target_tag,
                   size_t flat_coord, double h);

// Max relative error between analytic and central-difference gradients on a
// random sample of coordinates. h must lie in [1e-6, 1e-3]; 1e-4 balances
// truncation against roundoff for double precision at these loss scales.
double grad_check(const ModelSnapshot& model, const std::vector<Sentence>& src,
                  const std::vector<Sentence>& tgt_wrapped, TokenId target_tag,
                  double h = 1e-4, int n_coords = 50, uint64_t seed = 7);

double gradient_rel_error(double analytic, double numeric);

// Generation interface shared by the trainers: the usual implementation
// decodes with a frozen model snapshot, the cheat implementation answers
// with ground-truth translations for pipeline tests.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::vector<Sentence> translate_batch(const std::vector<Sentence>& src,
                                                LangId target_lang) const = 0;
  virtual uint64_t model_id() const = 0;
};

class ModelTranslator : public Translator {
 public:
  ModelTranslator(const ModelSnapshot& model, const Vocab& vocab)
      : model_(model), vocab_(vocab) {}
  std::vector<Sentence> translate_batch(const std::vector<Sentence>& src,
                                        LangId target_lang) const override;
  uint64_t model_id() const override { return model_.model_id; }

 private:
  const ModelSnapshot& model_;
  const Vocab& vocab_;
};

}  // namespace unmtlab
