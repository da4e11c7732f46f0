#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqvae/attention.hpp"
#include "seqvae/lstm.hpp"
#include "seqvae/text.hpp"
#include "seqvae/variational.hpp"

namespace seqvae {

/// How the sentence code z is produced. Deterministic uses z = mu and has
/// no KL term.
enum class LatentMode { None, Deterministic, Gaussian };
enum class AttentionMode { None, Deterministic, Variational };

struct ModelSpec {
  std::size_t vocab_size = 0;
  std::size_t emb_dim = 32;
  std::size_t hidden_dim = 100;
  std::size_t latent_dim = 16;
  std::size_t max_len = 10;
  LatentMode latent = LatentMode::Gaussian;
  bool bypass = false;
  AttentionMode attention = AttentionMode::None;
  AttentionStyle style = AttentionStyle::Multiplicative;
  AttnPriorKind prior = AttnPriorKind::MeanSource;

  bool conditions_on_latent() const { return latent != LatentMode::None; }
  bool has_kl() const { return latent == LatentMode::Gaussian || attention == AttentionMode::Variational; }
  bool stochastic() const { return has_kl(); }
};

/// Embedding table, encoder and decoder LSTMs, vocabulary projection and the
/// optional latent and attention blocks.
struct Seq2SeqModel {
  ModelSpec spec;
  Parameter embedding;  // |V| x d_emb
  LstmParams encoder;
  LstmParams decoder;
  Parameter W_out;  // |V| x d_h
  std::optional<PosteriorParams> posterior;
  std::optional<AttentionParams> attention;

  static Seq2SeqModel init(const ModelSpec& spec, Rng& rng) {
    if (spec.vocab_size <= special::count) throw std::invalid_argument("model: vocabulary too small");
    if (spec.max_len < 2) throw std::invalid_argument("model: max_len must be at least 2");
    Seq2SeqModel m;
    m.spec = spec;
    const std::size_t V = spec.vocab_size, E = spec.emb_dim, H = spec.hidden_dim, Z = spec.latent_dim;
    m.embedding = Parameter("embedding", glorot_uniform(rng, V, E));
    m.encoder = LstmParams::init("encoder", E, H, rng);
    m.decoder = LstmParams::init("decoder", E + (spec.conditions_on_latent() ? Z : 0), H, rng);
    m.W_out = Parameter("W_out", glorot_uniform(rng, V, H));
    if (spec.conditions_on_latent()) m.posterior = PosteriorParams::init(Z, H, rng);
    if (spec.attention != AttentionMode::None)
      m.attention = AttentionParams::init(spec.style, spec.attention == AttentionMode::Variational, H, rng);
    return m;
  }

  /// Trainable parameters in a fixed order (also the checkpoint order).
  ParamList params() {
    ParamList out{&embedding};
    for (auto* p : encoder.params()) out.push_back(p);
    for (auto* p : decoder.params()) out.push_back(p);
    out.push_back(&W_out);
    if (posterior) {
      out.insert(out.end(), {&posterior->A_mu, &posterior->b_mu});
      if (spec.latent == LatentMode::Gaussian) out.insert(out.end(), {&posterior->A_s, &posterior->b_s});
    }
    if (attention)
      for (auto* p : attention->params()) out.push_back(p);
    return out;
  }

  std::vector<const Parameter*> params() const {
    auto list = const_cast<Seq2SeqModel*>(this)->params();
    return {list.begin(), list.end()};
  }
};

struct ModelWeights {
  Var embedding;
  LstmWeights encoder;
  LstmWeights decoder;
  Var W_out;
  std::optional<PosteriorWeights> posterior;
  std::optional<AttentionWeights> attention;
};

template <class M>
ModelWeights bind_model(Tape& t, M& m) {
  auto b = [&](auto& param) -> Var {
    if constexpr (std::is_const_v<M>)
      return t.frozen(param);
    else
      return t.param(param);
  };
  ModelWeights w;
  w.embedding = b(m.embedding);
  w.encoder = bind(t, m.encoder);
  w.decoder = bind(t, m.decoder);
  w.W_out = b(m.W_out);
  if (m.posterior) w.posterior = bind(t, *m.posterior);
  if (m.attention) w.attention = bind(t, *m.attention);
  return w;
}

inline ModelWeights bind(Tape& t, Seq2SeqModel& m) { return bind_model(t, m); }
inline ModelWeights bind(Tape& t, const Seq2SeqModel& m) { return bind_model(t, m); }

// ---------------------------------------------------------------------------

/// Decoder start state: the encoder's final (h, c) when the bypass is on,
/// zeros otherwise.
inline LstmState init_decoder_state(const LstmState& encoder_final, bool bypass) {
  if (bypass) return encoder_final;
  Tape& t = *encoder_final.h.tape;
  return zero_state(t, encoder_final.h.rows(), encoder_final.h.cols());
}

/// Replaces each decoder input other than PAD and SOS by UNK with
/// probability p.
inline std::vector<std::size_t> word_dropout(const std::vector<std::size_t>& tokens, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("word_dropout: p must lie in [0, 1]");
  std::vector<std::size_t> out = tokens;
  if (p == 0.0) return out;
  for (auto& t : out) {
    if (t == special::pad || t == special::sos) continue;
    if (rng.bernoulli(p)) t = special::unk;
  }
  return out;
}

/// Per-step attention record with plain values. Masked scores are -inf.
struct AttentionStep {
  Tensor scores;
  Tensor weights;
  Tensor c_det;
  Tensor mu_c;
  Tensor sigma_c;  // empty for deterministic attention
  Tensor c;
  Tensor a;
};

struct EncodedBatch {
  EncoderOutput encoder;
  std::optional<GaussianPosterior> posterior;
  std::optional<AttentionMemory> memory;
  std::optional<AttnPrior> prior;
  std::size_t batch = 0;
};

namespace detail {

inline std::vector<std::size_t> column(const std::vector<TokenSequence>& seqs, std::size_t t) {
  std::vector<std::size_t> col(seqs.size());
  for (std::size_t b = 0; b < seqs.size(); ++b) col[b] = seqs[b].indices.at(t);
  return col;
}

inline void check_batch(const std::vector<TokenSequence>& seqs, std::size_t m, const char* what) {
  if (seqs.empty()) throw std::invalid_argument(std::string(what) + ": empty batch");
  for (const auto& s : seqs)
    if (s.indices.size() != m) throw ShapeError(std::string(what) + ": sequence length differs from max_len");
}

inline Tensor noise(Rng* rng, double scale, std::size_t rows, std::size_t cols) {
  Tensor eps = Tensor::zeros(rows, cols);
  if (rng == nullptr) return eps;
  for (double& v : eps.values()) v = scale * rng->normal();
  return eps;
}

}  // namespace detail

/// Embeds and encodes a batch of sources, then derives the latent posterior
/// and the attention memory when the model has them.
inline EncodedBatch encode_batch(const ModelWeights& w, const ModelSpec& spec, const std::vector<TokenSequence>& src) {
  detail::check_batch(src, spec.max_len, "encode_batch");
  Tape& t = *w.embedding.tape;
  std::vector<Var> xs;
  xs.reserve(spec.max_len);
  for (std::size_t i = 0; i < spec.max_len; ++i) xs.push_back(embedding(w.embedding, detail::column(src, i)));
  EncodedBatch e;
  e.batch = src.size();
  e.encoder = encode(w.encoder, xs);
  if (w.posterior) e.posterior = posterior_from_hidden(*w.posterior, e.encoder.final.h);
  if (w.attention) {
    std::vector<std::uint8_t> mask(src.size() * spec.max_len, 0);
    for (std::size_t b = 0; b < src.size(); ++b)
      for (std::size_t i = 0; i < src[b].true_length; ++i) mask[b * spec.max_len + i] = 1;
    e.memory = make_memory(*w.attention, e.encoder.outputs, std::move(mask));
    if (spec.attention == AttentionMode::Variational) e.prior = make_prior(spec.prior, *e.memory);
  }
  (void)t;
  return e;
}

/// Output of one decoder step. `kl_c` holds the per-row context KL for
/// variational attention.
struct StepOutput {
  LstmState state;
  Var logits;
  Var h_tar;
  std::optional<Var> kl_c;
  std::optional<Var> scores, weights, c_det, mu_c, sigma_c, c, a;
};

/// One decoder step: input is [prev embedding ; z] when the model is latent
/// conditioned; logits = W_out h_tar, or W_out a_j with attention.
inline StepOutput decode_step(const ModelWeights& w, const ModelSpec& spec, Var prev_emb, const LstmState& state,
                              std::optional<Var> z, const EncodedBatch* enc = nullptr, const Tensor* c_noise = nullptr) {
  if (spec.conditions_on_latent() && !z) throw std::invalid_argument("decode_step: model requires a latent code z");
  Var x = spec.conditions_on_latent() ? concat_cols({prev_emb, *z}) : prev_emb;
  StepOutput out;
  out.state = cell_step(w.decoder, x, state);
  out.h_tar = out.state.h;
  Var proj_in = out.h_tar;
  if (spec.attention != AttentionMode::None) {
    if (enc == nullptr || !enc->memory) throw std::invalid_argument("decode_step: attention needs encoder memory");
    const auto& aw = *w.attention;
    out.scores = attention_scores(aw, out.h_tar, *enc->memory);
    out.weights = attention_weights(*out.scores, *enc->memory);
    out.c_det = attention_context(*out.weights, *enc->memory);
    Var c = *out.c_det;
    if (spec.attention == AttentionMode::Variational) {
      ContextPosterior post = attn_posterior(aw, *out.c_det);
      out.mu_c = post.mu;
      out.sigma_c = post.sigma;
      out.kl_c = attn_kl(post, *enc->prior);
      if (c_noise != nullptr) c = add(post.mu, mul(post.sigma, x.tape->constant(*c_noise)));
    }
    out.c = c;
    out.a = attention_vector(aw, c, out.h_tar);
    proj_in = *out.a;
  }
  out.logits = linear(proj_in, w.W_out);
  return out;
}

/// Loss terms of one teacher-forced batch. All terms are batch means; the
/// reconstruction and attention terms are summed over target timesteps.
struct ForwardResult {
  Var j_rec;
  std::optional<Var> kl_z;
  std::optional<Var> kl_c;
  std::vector<Var> logits;
  std::size_t target_tokens = 0;
};

/// Teacher forcing: decoder inputs are SOS followed by the (word-dropped)
/// target prefix; cross-entropy is summed over non-PAD target positions.
/// Randomness is drawn in a fixed order: word dropout, z noise, then one
/// context-noise draw per step.
inline ForwardResult teacher_forced_loss(const ModelWeights& w, const ModelSpec& spec,
                                         const std::vector<TokenSequence>& source,
                                         const std::vector<TokenSequence>& target, double dropout_p, Rng& rng,
                                         bool sample = true) {
  detail::check_batch(target, spec.max_len, "teacher_forced_loss");
  if (source.size() != target.size()) throw std::invalid_argument("teacher_forced_loss: batch size mismatch");
  const std::size_t B = target.size(), m = spec.max_len;
  ForwardResult res;
  for (const auto& t : target) {
    if (t.true_length == 0) throw std::invalid_argument("teacher_forced_loss: target has no real tokens");
    res.target_tokens += t.true_length;
  }
  std::vector<std::vector<std::size_t>> dec_in(m, std::vector<std::size_t>(B));
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::size_t> in(m);
    in[0] = special::sos;
    for (std::size_t j = 1; j < m; ++j) in[j] = target[b].indices[j - 1];
    in = word_dropout(in, dropout_p, rng);
    for (std::size_t j = 0; j < m; ++j) dec_in[j][b] = in[j];
  }

  EncodedBatch enc = encode_batch(w, spec, source);
  Tape& t = *w.embedding.tape;
  std::optional<Var> z;
  if (spec.latent == LatentMode::Deterministic) {
    z = enc.posterior->mu;
  } else if (spec.latent == LatentMode::Gaussian) {
    Tensor eps = detail::noise(sample ? &rng : nullptr, 1.0, B, spec.latent_dim);
    z = reparameterize(*enc.posterior, eps);
    res.kl_z = kl_standard_normal(*enc.posterior);
  }

  LstmState state = init_decoder_state(enc.encoder.final, spec.bypass);
  const double inv_b = 1.0 / static_cast<double>(B);
  std::vector<Var> step_losses;
  std::vector<Var> step_kls;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> weights(B, 0.0);
    std::vector<std::size_t> targets(B);
    for (std::size_t b = 0; b < B; ++b) {
      targets[b] = target[b].indices[j];
      if (j < target[b].true_length) weights[b] = inv_b;
    }
    Tensor c_noise;
    if (spec.attention == AttentionMode::Variational)
      c_noise = detail::noise(sample ? &rng : nullptr, 1.0, B, spec.hidden_dim);
    StepOutput so = decode_step(w, spec, embedding(w.embedding, dec_in[j]), state, z, &enc,
                                c_noise.empty() ? nullptr : &c_noise);
    state = so.state;
    res.logits.push_back(so.logits);
    bool any = false;
    for (double x : weights) any = any || x != 0.0;
    if (!any) continue;
    step_losses.push_back(softmax_cross_entropy(so.logits, targets, weights));
    if (so.kl_c) step_kls.push_back(weighted_sum(*so.kl_c, weights));
  }
  Var total = step_losses.front();
  for (std::size_t k = 1; k < step_losses.size(); ++k) total = add(total, step_losses[k]);
  res.j_rec = total;
  if (!step_kls.empty()) {
    Var s = step_kls.front();
    for (std::size_t k = 1; k < step_kls.size(); ++k) s = add(s, step_kls[k]);
    res.kl_c = s;
  }
  (void)t;
  return res;
}

/// J_rec + lambda * (kl_z + gamma_a * sum_j kl_c_j) on the tape.
inline Var total_loss(const ForwardResult& r, double lambda, double gamma_a) {
  std::optional<Var> kl;
  if (r.kl_z) kl = *r.kl_z;
  if (r.kl_c) kl = kl ? add(*kl, scale(*r.kl_c, gamma_a)) : scale(*r.kl_c, gamma_a);
  if (!kl) return r.j_rec;
  return add(r.j_rec, scale(*kl, lambda));
}

// ---------------------------------------------------------------------------
// Greedy decoding.

struct DecodeResult {
  std::vector<std::size_t> tokens;  // EOS excluded
  bool hit_eos = false;
  std::vector<Tensor> logits;
  std::vector<Tensor> h;
  std::vector<Tensor> c;
  std::vector<AttentionStep> attention;
};

struct DecodeOptions {
  /// Multiplier on the standard-normal noise for z and every c_j; 0 gives
  /// the MAP decode (z = mu, c_j = c_det).
  double noise_scale = 0.0;
  /// Explicit latent rows (batch x d_z); the encoder posterior is not used.
  std::optional<Tensor> z;
  /// Explicit decoder start state rows; overrides the bypass rule.
  std::optional<std::pair<Tensor, Tensor>> init;
  /// Keep per-step logits, states and attention records.
  bool record = false;
};

namespace detail {
inline Tensor row_of(const Tensor& m, std::size_t r) {
  std::vector<double> v(m.row(r).begin(), m.row(r).end());
  return Tensor::vector(std::move(v));
}
}  // namespace detail

/// Feeds back the argmax token (never PAD or SOS; ties to the lowest index)
/// until EOS or max_len steps. `sources` may be empty when both z and the
/// start state are supplied, in which case `batch` gives the row count.
inline std::vector<DecodeResult> greedy_decode(const Seq2SeqModel& model, const std::vector<TokenSequence>& sources,
                                               const DecodeOptions& opt = {}, Rng* rng = nullptr,
                                               std::size_t batch = 0) {
  const ModelSpec& spec = model.spec;
  Tape t;
  ModelWeights w = bind(t, model);
  const std::size_t B = sources.empty() ? batch : sources.size();
  if (B == 0) throw std::invalid_argument("greedy_decode: empty batch");
  std::optional<EncodedBatch> enc;
  if (!sources.empty()) enc = encode_batch(w, spec, sources);
  if (spec.attention != AttentionMode::None && !enc)
    throw std::invalid_argument("greedy_decode: attention models need source sentences");
  Rng* noise_rng = opt.noise_scale != 0.0 ? rng : nullptr;
  if (opt.noise_scale != 0.0 && rng == nullptr) throw std::invalid_argument("greedy_decode: sampling needs an Rng");

  std::optional<Var> z;
  if (spec.conditions_on_latent()) {
    if (opt.z) {
      if (opt.z->rows() != B || opt.z->cols() != spec.latent_dim) throw ShapeError("greedy_decode: z has wrong shape");
      z = t.constant(Tensor::matrix(B, spec.latent_dim, opt.z->data()));
    } else if (enc) {
      if (spec.latent == LatentMode::Deterministic || noise_rng == nullptr) {
        z = enc->posterior->mu;
      } else {
        z = reparameterize(*enc->posterior, detail::noise(noise_rng, opt.noise_scale, B, spec.latent_dim));
      }
    } else {
      throw std::invalid_argument("greedy_decode: latent model needs z or source sentences");
    }
  }

  LstmState state;
  if (opt.init) {
    state = {t.constant(Tensor::matrix(B, spec.hidden_dim, opt.init->first.data())),
             t.constant(Tensor::matrix(B, spec.hidden_dim, opt.init->second.data()))};
  } else if (enc) {
    state = init_decoder_state(enc->encoder.final, spec.bypass);
  } else {
    state = zero_state(t, B, spec.hidden_dim);
  }

  std::vector<DecodeResult> out(B);
  std::vector<bool> done(B, false);
  std::vector<std::size_t> prev(B, special::sos);
  for (std::size_t j = 0; j < spec.max_len; ++j) {
    Tensor c_noise;
    if (spec.attention == AttentionMode::Variational)
      c_noise = detail::noise(noise_rng, opt.noise_scale, B, spec.hidden_dim);
    StepOutput so = decode_step(w, spec, embedding(w.embedding, prev), state, z, enc ? &*enc : nullptr,
                                c_noise.empty() ? nullptr : &c_noise);
    state = so.state;
    const Tensor& logits = so.logits.value();
    const std::size_t V = logits.cols();
    for (std::size_t b = 0; b < B; ++b) {
      if (done[b]) continue;
      std::size_t best = special::eos;
      double best_v = -std::numeric_limits<double>::infinity();
      for (std::size_t k = special::eos; k < V; ++k)
        if (logits.at(b, k) > best_v) {
          best_v = logits.at(b, k);
          best = k;
        }
      auto& r = out[b];
      if (opt.record) {
        r.logits.push_back(detail::row_of(logits, b));
        r.h.push_back(detail::row_of(state.h.value(), b));
        r.c.push_back(detail::row_of(state.c.value(), b));
        if (so.weights) {
          AttentionStep st;
          const std::size_t L = spec.max_len;
          st.scores = detail::row_of(so.scores->value(), b);
          for (std::size_t i = 0; i < L; ++i)
            if (!enc->memory->mask[b * L + i]) st.scores[i] = -std::numeric_limits<double>::infinity();
          st.weights = detail::row_of(so.weights->value(), b);
          st.c_det = detail::row_of(so.c_det->value(), b);
          st.mu_c = so.mu_c ? detail::row_of(so.mu_c->value(), b) : st.c_det;
          if (so.sigma_c) st.sigma_c = detail::row_of(so.sigma_c->value(), b);
          st.c = detail::row_of(so.c->value(), b);
          st.a = detail::row_of(so.a->value(), b);
          r.attention.push_back(std::move(st));
        }
      }
      if (best == special::eos) {
        r.hit_eos = true;
        done[b] = true;
      } else {
        r.tokens.push_back(best);
      }
      prev[b] = best;
    }
    bool all = true;
    for (bool d : done) all = all && d;
    if (all) break;
  }
  return out;
}

/// Posterior statistics and encoder final state as plain values.
struct EncodedValues {
  Tensor mu;     // batch x d_z
  Tensor sigma;  // batch x d_z (ones for deterministic latents)
  Tensor h;      // batch x d_h
  Tensor c;      // batch x d_h
};

inline EncodedValues encode_values(const Seq2SeqModel& model, const std::vector<TokenSequence>& sources) {
  Tape t;
  ModelWeights w = bind(t, model);
  EncodedBatch e = encode_batch(w, model.spec, sources);
  EncodedValues v;
  v.h = e.encoder.final.h.value();
  v.c = e.encoder.final.c.value();
  if (e.posterior) {
    v.mu = e.posterior->mu.value();
    v.sigma = model.spec.latent == LatentMode::Gaussian ? e.posterior->sigma.value()
                                                        : Tensor(v.mu.shape(), 1.0);
  }
  return v;
}

}  // namespace seqvae
