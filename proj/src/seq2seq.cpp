#include "unmtlab/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

namespace unmtlab {

namespace {

constexpr char kSnapshotMagic[8] = {'U', 'M', 'T', 'S', 'N', 'A', 'P', '1'};
constexpr uint32_t kSnapshotVersion = 1;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd gather_embed(const Eigen::MatrixXd& embed, const Eigen::MatrixXi& tokens,
                             int t) {
  const int batch = static_cast<int>(tokens.cols());
  Eigen::MatrixXd out(embed.rows(), batch);
  for (int b = 0; b < batch; ++b) out.col(b) = embed.col(tokens(t, b));
  return out;
}

void scatter_embed_grad(Eigen::MatrixXd& d_embed, const Eigen::MatrixXi& tokens, int t,
                        const Eigen::MatrixXd& d_x) {
  for (int b = 0; b < d_x.cols(); ++b) d_embed.col(tokens(t, b)) += d_x.col(b);
}

struct Padded {
  Eigen::MatrixXi tokens;  // (T, B), PAD-filled
  Eigen::MatrixXd mask;    // (T, B), 1.0 at real positions
  int steps = 0;
  int batch = 0;
};

Padded pad_batch(const std::vector<Sentence>& sents, int vocab_size) {
  Padded p;
  p.batch = static_cast<int>(sents.size());
  size_t max_len = 0;
  for (const auto& s : sents) max_len = std::max(max_len, s.size());
  p.steps = static_cast<int>(max_len);
  p.tokens = Eigen::MatrixXi::Constant(p.steps, p.batch, Vocab::kPad);
  p.mask = Eigen::MatrixXd::Zero(p.steps, p.batch);
  for (int b = 0; b < p.batch; ++b) {
    for (size_t t = 0; t < sents[b].size(); ++t) {
      TokenId id = sents[b][t];
      if (id < 0) throw ValidationError("negative token id in batch");
      p.tokens(static_cast<int>(t), b) = id < vocab_size ? id : Vocab::kUnk;
      p.mask(static_cast<int>(t), b) = 1.0;
    }
  }
  return p;
}

// One gated-recurrent cell step over a batch. Saves every intermediate the
// backward pass needs.
struct CellAct {
  Eigen::MatrixXd x, z, r, g, h_prev, h;  // h is post state-carry mask
};

Eigen::MatrixXd cell_forward(const GruParams& p, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& h_prev, const Eigen::MatrixXd* carry_mask,
                             CellAct* act) {
  Eigen::MatrixXd az = (p.w_z * x + p.u_z * h_prev).colwise() + p.b_z;
  Eigen::MatrixXd ar = (p.w_r * x + p.u_r * h_prev).colwise() + p.b_r;
  Eigen::MatrixXd z = az.unaryExpr([](double v) { return sigmoid(v); });
  Eigen::MatrixXd r = ar.unaryExpr([](double v) { return sigmoid(v); });
  Eigen::MatrixXd ah = (p.w_h * x + p.u_h * (r.array() * h_prev.array()).matrix()).colwise() + p.b_h;
  Eigen::MatrixXd g = ah.array().tanh();
  Eigen::MatrixXd h_new =
      (z.array() * h_prev.array() + (1.0 - z.array()) * g.array()).matrix();
  Eigen::MatrixXd h = h_new;
  if (carry_mask != nullptr) {
    // padded columns keep their previous state
    h = (carry_mask->array() * h_new.array() + (1.0 - carry_mask->array()) * h_prev.array())
            .matrix();
  }
  if (act != nullptr) {
    act->x = x;
    act->z = std::move(z);
    act->r = std::move(r);
    act->g = std::move(g);
    act->h_prev = h_prev;
    act->h = h;
  }
  return h;
}

// Backward through one cell step. d_h is the gradient at the (post-mask)
// output state; returns the gradient for h_prev and fills d_x.
Eigen::MatrixXd cell_backward(const GruParams& p, const CellAct& act,
                              const Eigen::MatrixXd* carry_mask, const Eigen::MatrixXd& d_h,
                              GruParams& dp, Eigen::MatrixXd& d_x) {
  Eigen::MatrixXd d_hnew = d_h;
  Eigen::MatrixXd d_hprev = Eigen::MatrixXd::Zero(d_h.rows(), d_h.cols());
  if (carry_mask != nullptr) {
    d_hnew = (d_h.array() * carry_mask->array()).matrix();
    d_hprev = (d_h.array() * (1.0 - carry_mask->array())).matrix();
  }
  Eigen::ArrayXXd z = act.z.array(), r = act.r.array(), g = act.g.array();
  Eigen::ArrayXXd d_z = d_hnew.array() * (act.h_prev.array() - g);
  Eigen::ArrayXXd d_g = d_hnew.array() * (1.0 - z);
  d_hprev.array() += d_hnew.array() * z;

  Eigen::MatrixXd d_ah = (d_g * (1.0 - g * g)).matrix();
  Eigen::MatrixXd q = (r * act.h_prev.array()).matrix();
  dp.w_h.noalias() += d_ah * act.x.transpose();
  dp.u_h.noalias() += d_ah * q.transpose();
  dp.b_h += d_ah.rowwise().sum();
  Eigen::MatrixXd d_q = p.u_h.transpose() * d_ah;
  Eigen::ArrayXXd d_r = d_q.array() * act.h_prev.array();
  d_hprev.array() += d_q.array() * r;

  Eigen::MatrixXd d_az = (d_z * z * (1.0 - z)).matrix();
  Eigen::MatrixXd d_ar = (d_r * r * (1.0 - r)).matrix();
  dp.w_z.noalias() += d_az * act.x.transpose();
  dp.u_z.noalias() += d_az * act.h_prev.transpose();
  dp.b_z += d_az.rowwise().sum();
  dp.w_r.noalias() += d_ar * act.x.transpose();
  dp.u_r.noalias() += d_ar * act.h_prev.transpose();
  dp.b_r += d_ar.rowwise().sum();

  d_x.noalias() = p.w_z.transpose() * d_az;
  d_x.noalias() += p.w_r.transpose() * d_ar;
  d_x.noalias() += p.w_h.transpose() * d_ah;
  d_hprev.noalias() += p.u_z.transpose() * d_az;
  d_hprev.noalias() += p.u_r.transpose() * d_ar;
  return d_hprev;
}

GruParams gru_zeros(int embed_dim, int hidden_dim) {
  GruParams p;
  p.w_z = Eigen::MatrixXd::Zero(hidden_dim, embed_dim);
  p.u_z = Eigen::MatrixXd::Zero(hidden_dim, hidden_dim);
  p.w_r = Eigen::MatrixXd::Zero(hidden_dim, embed_dim);
  p.u_r = Eigen::MatrixXd::Zero(hidden_dim, hidden_dim);
  p.w_h = Eigen::MatrixXd::Zero(hidden_dim, embed_dim);
  p.u_h = Eigen::MatrixXd::Zero(hidden_dim, hidden_dim);
  p.b_z = Eigen::VectorXd::Zero(hidden_dim);
  p.b_r = Eigen::VectorXd::Zero(hidden_dim);
  p.b_h = Eigen::VectorXd::Zero(hidden_dim);
  return p;
}

void append_gru_refs(const std::string& prefix, GruParams& p, std::vector<TensorRef>& out) {
  auto add = [&](const char* name, Eigen::MatrixXd& m) {
    out.push_back({prefix + name, m.data(), static_cast<size_t>(m.size())});
  };
  auto addv = [&](const char* name, Eigen::VectorXd& v) {
    out.push_back({prefix + name, v.data(), static_cast<size_t>(v.size())});
  };
  add("w_z", p.w_z);
  add("u_z", p.u_z);
  add("w_r", p.w_r);
  add("u_r", p.u_r);
  add("w_h", p.w_h);
  add("u_h", p.u_h);
  addv("b_z", p.b_z);
  addv("b_r", p.b_r);
  addv("b_h", p.b_h);
}

template <typename T>
void write_pod(std::string& buf, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

template <typename T>
T read_pod(const std::vector<uint8_t>& buf, size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw IoError("snapshot truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void check_finite(const std::vector<TensorRef>& refs, const char* what) {
  for (const auto& r : refs) {
    for (size_t i = 0; i < r.size; ++i) {
      if (!std::isfinite(r.data[i])) {
        throw NumericError(std::string(what) + " '" + r.name + "' contains a non-finite value");
      }
    }
  }
}

}  // namespace

void ModelDims::validate() const {
  if (vocab_size <= Vocab::kNumReserved) throw ValidationError("vocab_size must exceed the reserved ids");
  if (embed_dim <= 0) throw ValidationError("embed_dim must be positive");
  if (hidden_dim <= 0) throw ValidationError("hidden_dim must be positive");
  if (max_decode_len <= 0) throw ValidationError("max_decode_len must be positive");
  if (tie_output && embed_dim != hidden_dim) {
    throw ValidationError("tie_output requires embed_dim == hidden_dim");
  }
}

Gradients Gradients::zeros_like(const ModelSnapshot& model) {
  const auto& d = model.dims;
  Gradients g;
  g.embed = Eigen::MatrixXd::Zero(d.embed_dim, d.vocab_size);
  g.enc = gru_zeros(d.embed_dim, d.hidden_dim);
  g.dec = gru_zeros(d.embed_dim, d.hidden_dim);
  g.combine_w = Eigen::MatrixXd::Zero(d.hidden_dim, 2 * d.hidden_dim);
  g.combine_b = Eigen::VectorXd::Zero(d.hidden_dim);
  if (d.tie_output) {
    g.out_w = Eigen::MatrixXd::Zero(0, 0);
  } else {
    g.out_w = Eigen::MatrixXd::Zero(d.vocab_size, d.hidden_dim);
  }
  g.out_b = Eigen::VectorXd::Zero(d.vocab_size);
  return g;
}

template <typename ModelLike>
static std::vector<TensorRef> tensor_refs_impl(ModelLike& m) {
  std::vector<TensorRef> out;
  out.push_back({"embed", m.embed.data(), static_cast<size_t>(m.embed.size())});
  append_gru_refs("enc.", m.enc, out);
  append_gru_refs("dec.", m.dec, out);
  out.push_back({"combine_w", m.combine_w.data(), static_cast<size_t>(m.combine_w.size())});
  out.push_back({"combine_b", m.combine_b.data(), static_cast<size_t>(m.combine_b.size())});
  out.push_back({"out_w", m.out_w.data(), static_cast<size_t>(m.out_w.size())});
  out.push_back({"out_b", m.out_b.data(), static_cast<size_t>(m.out_b.size())});
  return out;
}

std::vector<TensorRef> tensor_refs(ModelSnapshot& m) { return tensor_refs_impl(m); }
std::vector<TensorRef> tensor_refs(Gradients& g) { return tensor_refs_impl(g); }

size_t param_count(const ModelSnapshot& m) {
  size_t n = 0;
  auto refs = tensor_refs(const_cast<ModelSnapshot&>(m));
  for (const auto& r : refs) n += r.size;
  return n;
}

ModelSnapshot init_model(const ModelDims& dims, uint64_t seed) {
  dims.validate();
  ModelSnapshot m;
  m.dims = dims;
  Gradients shape = Gradients::zeros_like(m);  // reuse the zero-shaped tensors
  m.embed = std::move(shape.embed);
  m.enc = std::move(shape.enc);
  m.dec = std::move(shape.dec);
  m.combine_w = std::move(shape.combine_w);
  m.combine_b = std::move(shape.combine_b);
  m.out_w = std::move(shape.out_w);
  m.out_b = std::move(shape.out_b);
  Rng rng(Rng::derive(seed, "init_model"));
  for (auto& ref : tensor_refs(m)) {
    for (size_t i = 0; i < ref.size; ++i) {
      double u = rng.uniform();
      while (u == 0.0) u = rng.uniform();  // keep values strictly inside the interval
      ref.data[i] = -0.08 + 0.16 * u;
    }
  }
  m.step = 0;
  m.model_id = Rng::derive(seed, "model_id");
  return m;
}

Sentence wrap_target(const Sentence& s) {
  Sentence out;
  out.reserve(s.size() + 2);
  out.push_back(Vocab::kBos);
  out.insert(out.end(), s.begin(), s.end());
  out.push_back(Vocab::kEos);
  return out;
}

namespace {

// Shared forward state for loss and translation.
struct EncoderRun {
  Padded src;
  std::vector<CellAct> acts;
  std::vector<Eigen::MatrixXd> states;  // post-mask h per step
  Eigen::MatrixXd final_state;          // (H, B)
};

EncoderRun run_encoder(const ModelSnapshot& model, const std::vector<Sentence>& src) {
  EncoderRun run;
  run.src = pad_batch(src, model.dims.vocab_size);
  const int batch = run.src.batch;
  const int hidden = model.dims.hidden_dim;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(hidden, batch);
  run.acts.resize(run.src.steps);
  run.states.reserve(run.src.steps);
  for (int t = 0; t < run.src.steps; ++t) {
    Eigen::MatrixXd x = gather_embed(model.embed, run.src.tokens, t);
    Eigen::MatrixXd mask_row = run.src.mask.row(t).replicate(hidden, 1);
    h = cell_forward(model.enc, x, h, &mask_row, &run.acts[t]);
    run.states.push_back(h);
  }
  run.final_state = run.src.steps > 0 ? run.states.back() : h;
  return run;
}

struct AttnResult {
  Eigen::MatrixXd context;  // (H, B)
  Eigen::MatrixXd alpha;    // (Ts, B); empty when attention is off
};

AttnResult attend(const EncoderRun& enc, const Eigen::MatrixXd& s, bool use_attention) {
  AttnResult res;
  const int batch = static_cast<int>(s.cols());
  const int steps = enc.src.steps;
  if (!use_attention || steps == 0) {
    res.context = enc.final_state;
    return res;
  }
  Eigen::MatrixXd scores(steps, batch);
  for (int i = 0; i < steps; ++i) {
    scores.row(i) = (enc.states[i].array() * s.array()).colwise().sum();
  }
  scores += ((enc.src.mask.array() - 1.0) * 1e9).matrix();  // pads get -1e9
  Eigen::RowVectorXd mx = scores.colwise().maxCoeff();
  Eigen::MatrixXd ex = (scores.rowwise() - mx).array().exp();
  Eigen::RowVectorXd denom = ex.colwise().sum();
  res.alpha = ex.array().rowwise() / denom.array();
  res.context = Eigen::MatrixXd::Zero(s.rows(), batch);
  for (int i = 0; i < steps; ++i) {
    res.context += (enc.states[i].array().rowwise() *
                    res.alpha.row(i).array())
                       .matrix();
  }
  return res;
}

Eigen::MatrixXd output_logits(const ModelSnapshot& model, const Eigen::MatrixXd& o) {
  Eigen::MatrixXd logits;
  if (model.dims.tie_output) {
    logits.noalias() = model.embed.transpose() * o;
  } else {
    logits.noalias() = model.out_w * o;
  }
  logits.colwise() += model.out_b;
  return logits;
}

Eigen::MatrixXd softmax_cols(const Eigen::MatrixXd& logits) {
  Eigen::RowVectorXd mx = logits.colwise().maxCoeff();
  Eigen::MatrixXd ex = (logits.rowwise() - mx).array().exp();
  Eigen::RowVectorXd denom = ex.colwise().sum();
  return ex.array().rowwise() / denom.array();
}

}  // namespace

LossResult forward_loss(const ModelSnapshot& model, const std::vector<Sentence>& src,
                        const std::vector<Sentence>& tgt_wrapped, TokenId target_tag) {
  model.dims.validate();
  if (src.empty() || src.size() != tgt_wrapped.size()) {
    throw ValidationError("loss needs equally many source and target sentences");
  }
  if (target_tag != Vocab::kTagL1 && target_tag != Vocab::kTagL2) {
    throw ValidationError("target_tag must be a language tag id");
  }
  for (const auto& s : src) {
    if (s.empty()) throw ValidationError("empty source sentence in batch");
  }
  for (const auto& t : tgt_wrapped) {
    if (t.size() < 2 || t.front() != Vocab::kBos || t.back() != Vocab::kEos) {
      throw ValidationError("target sentences must be wrapped BOS ... EOS");
    }
  }
  check_finite(tensor_refs(const_cast<ModelSnapshot&>(model)), "parameter");

  const auto& dims = model.dims;
  const int hidden = dims.hidden_dim;
  const int batch = static_cast<int>(src.size());

  EncoderRun enc = run_encoder(model, src);

  // Teacher forcing: inputs [tag, y1..yn], golds [y1..yn, EOS].
  std::vector<Sentence> dec_in(tgt_wrapped.size()), gold(tgt_wrapped.size());
  for (size_t i = 0; i < tgt_wrapped.size(); ++i) {
    const Sentence& w = tgt_wrapped[i];
    dec_in[i].assign(w.begin(), w.end() - 1);
    dec_in[i][0] = target_tag;
    gold[i].assign(w.begin() + 1, w.end());
  }
  Padded din = pad_batch(dec_in, dims.vocab_size);
  Padded dgold = pad_batch(gold, dims.vocab_size);

  double n_real = dgold.mask.sum();
  if (n_real <= 0) throw ValidationError("no real target tokens in batch");

  std::vector<CellAct> dacts(din.steps);
  std::vector<Eigen::MatrixXd> dstates;  // s_t
  std::vector<AttnResult> attns(din.steps);
  std::vector<Eigen::MatrixXd> outs(din.steps);   // o_t (post-tanh)
  std::vector<Eigen::MatrixXd> probs(din.steps);  // softmax
  dstates.reserve(din.steps);

  Eigen::MatrixXd s = enc.final_state;
  double total_nll = 0.0;
  for (int t = 0; t < din.steps; ++t) {
    // The tag embedding joins every decoder input so the target language
    // stays in force across the whole sequence instead of washing out of
    // the recurrent state after the first step.
    Eigen::MatrixXd x = gather_embed(model.embed, din.tokens, t);
    x.colwise() += model.embed.col(target_tag);
    s = cell_forward(model.dec, x, s, nullptr, &dacts[t]);
    dstates.push_back(s);
    attns[t] = attend(enc, s, dims.use_attention);
    Eigen::MatrixXd u(2 * hidden, batch);
    u.topRows(hidden) = s;
    u.bottomRows(hidden) = attns[t].context;
    Eigen::MatrixXd o = ((model.combine_w * u).colwise() + model.combine_b).array().tanh();
    outs[t] = o;
    probs[t] = softmax_cols(output_logits(model, o));
    for (int b = 0; b < batch; ++b) {
      if (dgold.mask(t, b) > 0.0) {
        double p = probs[t](dgold.tokens(t, b), b);
        total_nll -= std::log(std::max(p, 1e-300));
      }
    }
  }

  LossResult res;
  res.loss = total_nll / n_real;
  res.real_tokens = static_cast<size_t>(n_real);
  res.grads = Gradients::zeros_like(model);
  Gradients& g = res.grads;

  // dH[i]: gradient flowing into encoder state i from attention and from the
  // decoder initial state.
  std::vector<Eigen::MatrixXd> d_enc_state(
      enc.src.steps, Eigen::MatrixXd::Zero(hidden, batch));
  Eigen::MatrixXd d_s = Eigen::MatrixXd::Zero(hidden, batch);
  Eigen::MatrixXd d_final_extra = Eigen::MatrixXd::Zero(hidden, batch);

  for (int t = din.steps - 1; t >= 0; --t) {
    Eigen::MatrixXd d_logits = probs[t];
    for (int b = 0; b < batch; ++b) {
      if (dgold.mask(t, b) > 0.0) {
        d_logits(dgold.tokens(t, b), b) -= 1.0;
        d_logits.col(b) /= n_real;
      } else {
        d_logits.col(b).setZero();
      }
    }
    Eigen::MatrixXd d_o;
    if (dims.tie_output) {
      g.embed.noalias() += outs[t] * d_logits.transpose();
      d_o.noalias() = model.embed * d_logits;
    } else {
      g.out_w.noalias() += d_logits * outs[t].transpose();
      d_o.noalias() = model.out_w.transpose() * d_logits;
    }
    g.out_b += d_logits.rowwise().sum();

    Eigen::MatrixXd d_uo =
        (d_o.array() * (1.0 - outs[t].array() * outs[t].array())).matrix();
    Eigen::MatrixXd u(2 * hidden, batch);
    u.topRows(hidden) = dstates[t];
    u.bottomRows(hidden) = attns[t].context;
    g.combine_w.noalias() += d_uo * u.transpose();
    g.combine_b += d_uo.rowwise().sum();
    Eigen::MatrixXd d_u = model.combine_w.transpose() * d_uo;
    d_s += d_u.topRows(hidden);
    Eigen::MatrixXd d_c = d_u.bottomRows(hidden);

    if (dims.use_attention && enc.src.steps > 0) {
      const Eigen::MatrixXd& alpha = attns[t].alpha;
      const int steps = enc.src.steps;
      Eigen::MatrixXd d_alpha(steps, batch);
      for (int i = 0; i < steps; ++i) {
        d_alpha.row(i) = (enc.states[i].array() * d_c.array()).colwise().sum();
        d_enc_state[i] += (d_c.array().rowwise() * alpha.row(i).array()).matrix();
      }
      Eigen::RowVectorXd dot = (d_alpha.array() * alpha.array()).colwise().sum();
      Eigen::MatrixXd d_scores =
          (alpha.array() * (d_alpha.array().rowwise() - dot.array())).matrix();
      for (int i = 0; i < steps; ++i) {
        d_s += (enc.states[i].array().rowwise() * d_scores.row(i).array()).matrix();
        d_enc_state[i] +=
            (dstates[t].array().rowwise() * d_scores.row(i).array()).matrix();
      }
    } else {
      d_final_extra += d_c;
    }

    Eigen::MatrixXd d_x(dims.embed_dim, batch);
    d_s = cell_backward(model.dec, dacts[t], nullptr, d_s, g.dec, d_x);
    scatter_embed_grad(g.embed, din.tokens, t, d_x);
    // columns past a sentence's end carry exactly zero gradient, so the tag
    // embedding accumulates over real positions only
    g.embed.col(target_tag) += d_x.rowwise().sum();
  }
  // decoder init state was the final encoder state
  d_final_extra += d_s;
  if (enc.src.steps > 0) {
    d_enc_state[enc.src.steps - 1] += d_final_extra;
    Eigen::MatrixXd d_h = Eigen::MatrixXd::Zero(hidden, batch);
    for (int t = enc.src.steps - 1; t >= 0; --t) {
      d_h += d_enc_state[t];
      Eigen::MatrixXd mask_row = enc.src.mask.row(t).replicate(hidden, 1);
      Eigen::MatrixXd d_x(dims.embed_dim, batch);
      d_h = cell_backward(model.enc, enc.acts[t], &mask_row, d_h, g.enc, d_x);
      scatter_embed_grad(g.embed, enc.src.tokens, t, d_x);
    }
  }

  if (!std::isfinite(res.loss)) throw NumericError("loss is non-finite");
  check_finite(tensor_refs(g), "gradient");
  return res;
}

double loss_only(const ModelSnapshot& model, const std::vector<Sentence>& src,
                 const std::vector<Sentence>& tgt_wrapped, TokenId target_tag) {
  const auto& dims = model.dims;
  if (src.empty() || src.size() != tgt_wrapped.size()) {
    throw ValidationError("loss needs equally many source and target sentences");
  }
  EncoderRun enc = run_encoder(model, src);
  std::vector<Sentence> dec_in(tgt_wrapped.size()), gold(tgt_wrapped.size());
  for (size_t i = 0; i < tgt_wrapped.size(); ++i) {
    const Sentence& w = tgt_wrapped[i];
    if (w.size() < 2 || w.front() != Vocab::kBos || w.back() != Vocab::kEos) {
      throw ValidationError("target sentences must be wrapped BOS ... EOS");
    }
    dec_in[i].assign(w.begin(), w.end() - 1);
    dec_in[i][0] = target_tag;
    gold[i].assign(w.begin() + 1, w.end());
  }
  Padded din = pad_batch(dec_in, dims.vocab_size);
  Padded dgold = pad_batch(gold, dims.vocab_size);
  double n_real = dgold.mask.sum();
  if (n_real <= 0) throw ValidationError("no real target tokens in batch");
  Eigen::MatrixXd s = enc.final_state;
  const int hidden = dims.hidden_dim;
  const int batch = static_cast<int>(src.size());
  double total_nll = 0.0;
  for (int t = 0; t < din.steps; ++t) {
    Eigen::MatrixXd x = gather_embed(model.embed, din.tokens, t);
    x.colwise() += model.embed.col(target_tag);
    s = cell_forward(model.dec, x, s, nullptr, nullptr);
    AttnResult at = attend(enc, s, dims.use_attention);
    Eigen::MatrixXd u(2 * hidden, batch);
    u.topRows(hidden) = s;
    u.bottomRows(hidden) = at.context;
    Eigen::MatrixXd o = ((model.combine_w * u).colwise() + model.combine_b).array().tanh();
    Eigen::MatrixXd p = softmax_cols(output_logits(model, o));
    for (int b = 0; b < batch; ++b) {
      if (dgold.mask(t, b) > 0.0) {
        total_nll -= std::log(std::max(p(dgold.tokens(t, b), b), 1e-300));
      }
    }
  }
  return total_nll / n_real;
}

OptState OptState::fresh(const ModelSnapshot& model, const AdamConfig& cfg) {
  OptState s;
  s.cfg = cfg;
  s.m = Gradients::zeros_like(model);
  s.v = Gradients::zeros_like(model);
  s.step = 0;
  return s;
}

void adam_step(OptState& opt, ModelSnapshot& model, const Gradients& grads) {
  opt.step += 1;
  model.step += 1;
  const double b1 = opt.cfg.beta1, b2 = opt.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(opt.step));
  auto pr = tensor_refs(model);
  auto gr = tensor_refs(const_cast<Gradients&>(grads));
  auto mr = tensor_refs(opt.m);
  auto vr = tensor_refs(opt.v);
  for (size_t k = 0; k < pr.size(); ++k) {
    if (pr[k].size != gr[k].size) throw ValidationError("gradient shape mismatch: " + pr[k].name);
    for (size_t i = 0; i < pr[k].size; ++i) {
      double gg = gr[k].data[i];
      if (!std::isfinite(gg)) throw NumericError("gradient '" + pr[k].name + "' is non-finite");
      double& m = mr[k].data[i];
      double& v = vr[k].data[i];
      m = b1 * m + (1.0 - b1) * gg;
      v = b2 * v + (1.0 - b2) * gg * gg;
      double mhat = m / bc1;
      double vhat = v / bc2;
      pr[k].data[i] -= opt.cfg.lr * mhat / (std::sqrt(vhat) + opt.cfg.eps);
    }
  }
}

std::vector<Sentence> translate(const ModelSnapshot& model, const std::vector<Sentence>& src,
                                TokenId target_tag, int max_len, TranslateTrace* trace) {
  model.dims.validate();
  if (target_tag != Vocab::kTagL1 && target_tag != Vocab::kTagL2) {
    throw ValidationError("target_tag must be a language tag id");
  }
  if (src.empty()) return {};
  for (const auto& s : src) {
    if (s.empty()) throw ValidationError("empty source sentence in batch");
  }
  const int limit = max_len < 0 ? model.dims.max_decode_len : max_len;
  const int hidden = model.dims.hidden_dim;
  const int batch = static_cast<int>(src.size());
  EncoderRun enc = run_encoder(model, src);

  std::vector<Sentence> out(batch);
  std::vector<bool> done(batch, false);
  if (trace != nullptr) trace->step_distributions.assign(batch, {});

  Eigen::MatrixXd s = enc.final_state;
  Eigen::VectorXi cur = Eigen::VectorXi::Constant(batch, target_tag);
  for (int step = 0; step < limit; ++step) {
    Eigen::MatrixXd x(model.dims.embed_dim, batch);
    for (int b = 0; b < batch; ++b) x.col(b) = model.embed.col(cur(b));
    x.colwise() += model.embed.col(target_tag);
    s = cell_forward(model.dec, x, s, nullptr, nullptr);
    AttnResult at = attend(enc, s, model.dims.use_attention);
    Eigen::MatrixXd u(2 * hidden, batch);
    u.topRows(hidden) = s;
    u.bottomRows(hidden) = at.context;
    Eigen::MatrixXd o = ((model.combine_w * u).colwise() + model.combine_b).array().tanh();
    Eigen::MatrixXd probs = softmax_cols(output_logits(model, o));
    bool all_done = true;
    for (int b = 0; b < batch; ++b) {
      if (done[b]) continue;
      if (trace != nullptr) trace->step_distributions[b].push_back(probs.col(b));
      int best = -1;
      double best_p = -1.0;
      for (int v = 0; v < model.dims.vocab_size; ++v) {
        if (v == Vocab::kPad || v == Vocab::kBos || v == Vocab::kTagL1 || v == Vocab::kTagL2) {
          continue;
        }
        if (probs(v, b) > best_p) {  // strict: ties keep the lowest id
          best_p = probs(v, b);
          best = v;
        }
      }
      if (best == Vocab::kEos) {
        done[b] = true;
      } else {
        out[b].push_back(best);
        cur(b) = best;
        all_done = false;
      }
    }
    if (all_done) break;
  }
  return out;
}

double fd_gradient(const ModelSnapshot& model, const std::vector<Sentence>& src,
                   const std::vector<Sentence>& tgt_wrapped, TokenId target_tag,
                   size_t flat_coord, double h) {
  ModelSnapshot probe = model;
  auto refs = tensor_refs(probe);
  size_t remaining = flat_coord;
  double* slot = nullptr;
  for (auto& r : refs) {
    if (remaining < r.size) {
      slot = r.data + remaining;
      break;
    }
    remaining -= r.size;
  }
  if (slot == nullptr) throw ValidationError("flat coordinate out of range");
  const double orig = *slot;
  *slot = orig + h;
  double up = loss_only(probe, src, tgt_wrapped, target_tag);
  *slot = orig - h;
  double down = loss_only(probe, src, tgt_wrapped, target_tag);
  *slot = orig;
  return (up - down) / (2.0 * h);
}

double gradient_rel_error(double analytic, double numeric) {
  double denom = std::max(std::abs(analytic), std::abs(numeric));
  if (denom < 1e-7) return 0.0;  // both effectively zero: below FD resolution
  return std::abs(analytic - numeric) / denom;
}

double grad_check(const ModelSnapshot& model, const std::vector<Sentence>& src,
                  const std::vector<Sentence>& tgt_wrapped, TokenId target_tag, double h,
                  int n_coords, uint64_t seed) {
  if (h < 1e-6 || h > 1e-3) {
    throw ValidationError("grad_check: h must lie in [1e-6, 1e-3]");
  }
  if (n_coords < 1) throw ValidationError("grad_check: n_coords must be >= 1");
  LossResult res = forward_loss(model, src, tgt_wrapped, target_tag);
  auto grefs = tensor_refs(res.grads);
  size_t total = 0;
  for (const auto& r : grefs) total += r.size;
  Rng rng(Rng::derive(seed, "grad_check"));
  double worst = 0.0;
  for (int k = 0; k < n_coords; ++k) {
    size_t coord = rng.index(total);
    size_t remaining = coord;
    double analytic = 0.0;
    for (const auto& r : grefs) {
      if (remaining < r.size) {
        analytic = r.data[remaining];
        break;
      }
      remaining -= r.size;
    }
    double numeric = fd_gradient(model, src, tgt_wrapped, target_tag, coord, h);
    worst = std::max(worst, gradient_rel_error(analytic, numeric));
  }
  return worst;
}

std::vector<uint8_t> ModelSnapshot::serialize() const {
  std::string buf;
  buf.append(kSnapshotMagic, sizeof(kSnapshotMagic));
  write_pod(buf, kSnapshotVersion);
  write_pod(buf, static_cast<int32_t>(dims.vocab_size));
  write_pod(buf, static_cast<int32_t>(dims.embed_dim));
  write_pod(buf, static_cast<int32_t>(dims.hidden_dim));
  write_pod(buf, static_cast<int32_t>(dims.max_decode_len));
  write_pod(buf, static_cast<uint8_t>(dims.use_attention ? 1 : 0));
  write_pod(buf, static_cast<uint8_t>(dims.tie_output ? 1 : 0));
  write_pod(buf, step);
  write_pod(buf, model_id);
  auto refs = tensor_refs(const_cast<ModelSnapshot&>(*this));
  write_pod(buf, static_cast<uint32_t>(refs.size()));
  for (const auto& r : refs) {
    write_pod(buf, static_cast<uint64_t>(r.size));
    buf.append(reinterpret_cast<const char*>(r.data), r.size * sizeof(double));
  }
  return std::vector<uint8_t>(buf.begin(), buf.end());
}

ModelSnapshot ModelSnapshot::deserialize(const std::vector<uint8_t>& bytes) {
  size_t pos = 0;
  if (bytes.size() < sizeof(kSnapshotMagic) ||
      std::memcmp(bytes.data(), kSnapshotMagic, sizeof(kSnapshotMagic)) != 0) {
    throw IoError("not a model snapshot");
  }
  pos = sizeof(kSnapshotMagic);
  uint32_t version = read_pod<uint32_t>(bytes, pos);
  if (version != kSnapshotVersion) throw IoError("unsupported snapshot version");
  ModelDims dims;
  dims.vocab_size = read_pod<int32_t>(bytes, pos);
  dims.embed_dim = read_pod<int32_t>(bytes, pos);
  dims.hidden_dim = read_pod<int32_t>(bytes, pos);
  dims.max_decode_len = read_pod<int32_t>(bytes, pos);
  dims.use_attention = read_pod<uint8_t>(bytes, pos) != 0;
  dims.tie_output = read_pod<uint8_t>(bytes, pos) != 0;
  dims.validate();
  ModelSnapshot m = init_model(dims, 0);
  m.step = read_pod<uint64_t>(bytes, pos);
  m.model_id = read_pod<uint64_t>(bytes, pos);
  auto refs = tensor_refs(m);
  uint32_t n_tensors = read_pod<uint32_t>(bytes, pos);
  if (n_tensors != refs.size()) throw IoError("snapshot tensor count mismatch");
  for (auto& r : refs) {
    uint64_t sz = read_pod<uint64_t>(bytes, pos);
    if (sz != r.size) throw IoError("snapshot tensor size mismatch: " + r.name);
    if (pos + sz * sizeof(double) > bytes.size()) throw IoError("snapshot truncated");
    std::memcpy(r.data, bytes.data() + pos, sz * sizeof(double));
    pos += sz * sizeof(double);
  }
  return m;
}

void ModelSnapshot::save(const std::string& path) const {
  auto bytes = serialize();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

ModelSnapshot ModelSnapshot::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

uint64_t ModelSnapshot::content_hash() const {
  auto bytes = serialize();
  uint64_t h = 1469598103934665603ull;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<Sentence> ModelTranslator::translate_batch(const std::vector<Sentence>& src,
                                                       LangId target_lang) const {
  return translate(model_, src, vocab_.lang_tag(target_lang));
}

}  // namespace unmtlab
