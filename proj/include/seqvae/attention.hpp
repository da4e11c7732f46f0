#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "seqvae/ops.hpp"
#include "seqvae/optim.hpp"
#include "seqvae/rng.hpp"
#include "seqvae/variational.hpp"

namespace seqvae {

enum class AttentionStyle { Multiplicative, Additive };
enum class AttnPriorKind { StandardNormal, MeanSource };

inline AttentionStyle parse_attention_style(const std::string& s) {
  if (s == "multiplicative") return AttentionStyle::Multiplicative;
  if (s == "additive") return AttentionStyle::Additive;
  throw std::invalid_argument("unknown attention style '" + s + "'");
}

inline std::string to_string(AttentionStyle s) {
  return s == AttentionStyle::Multiplicative ? "multiplicative" : "additive";
}

/// Score weights for one style, the output combiner W_c, and (for
/// variational attention) the tanh layer plus linear head that produce the
/// context log-variance.
struct AttentionParams {
  AttentionStyle style = AttentionStyle::Multiplicative;
  bool variational = false;
  std::size_t d_h = 0;
  Parameter W;           // multiplicative: d_h x d_h
  Parameter W1, W2, v_a; // additive: d_h x d_h, d_h x d_h, 1 x d_h
  Parameter W_c;         // d_h x 2 d_h
  Parameter var_A1, var_b1, var_A2, var_b2;

  static AttentionParams init(AttentionStyle style, bool variational, std::size_t d_h, Rng& rng) {
    AttentionParams p;
    p.style = style;
    p.variational = variational;
    p.d_h = d_h;
    if (style == AttentionStyle::Multiplicative) {
      p.W = Parameter("attn.W", glorot_uniform(rng, d_h, d_h));
    } else {
      p.W1 = Parameter("attn.W1", glorot_uniform(rng, d_h, d_h));
      p.W2 = Parameter("attn.W2", glorot_uniform(rng, d_h, d_h));
      p.v_a = Parameter("attn.v_a", glorot_uniform(rng, 1, d_h));
    }
    p.W_c = Parameter("attn.W_c", glorot_uniform(rng, d_h, 2 * d_h));
    if (variational) {
      p.var_A1 = Parameter("attn.var_A1", glorot_uniform(rng, d_h, d_h));
      p.var_b1 = Parameter("attn.var_b1", Tensor({1, d_h}));
      p.var_A2 = Parameter("attn.var_A2", glorot_uniform(rng, d_h, d_h));
      p.var_b2 = Parameter("attn.var_b2", Tensor({1, d_h}));
    }
    return p;
  }

  ParamList params() {
    ParamList out;
    if (style == AttentionStyle::Multiplicative)
      out = {&W};
    else
      out = {&W1, &W2, &v_a};
    out.push_back(&W_c);
    if (variational) out.insert(out.end(), {&var_A1, &var_b1, &var_A2, &var_b2});
    return out;
  }
};

struct AttentionWeights {
  AttentionStyle style = AttentionStyle::Multiplicative;
  bool variational = false;
  Var W, W1, W2, v_a, W_c, var_A1, var_b1, var_A2, var_b2;
};

template <class P>
AttentionWeights bind_attention(Tape& t, P& p) {
  auto b = [&](auto& param) -> Var {
    if constexpr (std::is_const_v<P>)
      return t.frozen(param);
    else
      return t.param(param);
  };
  AttentionWeights w;
  w.style = p.style;
  w.variational = p.variational;
  if (p.style == AttentionStyle::Multiplicative) {
    w.W = b(p.W);
  } else {
    w.W1 = b(p.W1);
    w.W2 = b(p.W2);
    w.v_a = b(p.v_a);
  }
  w.W_c = b(p.W_c);
  if (p.variational) {
    w.var_A1 = b(p.var_A1);
    w.var_b1 = b(p.var_b1);
    w.var_A2 = b(p.var_A2);
    w.var_b2 = b(p.var_b2);
  }
  return w;
}

inline AttentionWeights bind(Tape& t, AttentionParams& p) { return bind_attention(t, p); }
inline AttentionWeights bind(Tape& t, const AttentionParams& p) { return bind_attention(t, p); }

/// Encoder outputs prepared for attention. `mask` is batch x |x| with 1 on
/// real (non-PAD) source positions.
struct AttentionMemory {
  std::vector<Var> states;
  std::vector<Var> keys;  // W_2 h_src per position, additive style only
  std::vector<std::uint8_t> mask;
  std::size_t batch = 0;

  std::size_t length() const { return states.size(); }
};

inline AttentionMemory make_memory(const AttentionWeights& w, const std::vector<Var>& src_states,
                                   std::vector<std::uint8_t> mask) {
  if (src_states.empty()) throw std::invalid_argument("attention: empty source");
  AttentionMemory m;
  m.states = src_states;
  m.batch = src_states.front().rows();
  m.mask = mask.empty() ? std::vector<std::uint8_t>(m.batch * src_states.size(), 1) : std::move(mask);
  if (m.mask.size() != m.batch * src_states.size()) throw ShapeError("attention: mask does not match source");
  if (w.style == AttentionStyle::Additive)
    for (Var h : src_states) m.keys.push_back(linear(h, w.W2));
  return m;
}

/// Unnormalized scores, batch x |x|. Multiplicative: h_tar^T W^T h_src.
/// Additive: v_a^T tanh(W_1 h_tar + W_2 h_src). Padding is excluded later by
/// `attention_weights` through the memory mask.
inline Var attention_scores(const AttentionWeights& w, Var h_tar, const AttentionMemory& mem) {
  const std::size_t d = mem.states.front().cols();
  if (h_tar.cols() != d || h_tar.rows() != mem.batch) throw ShapeError("attention_scores: dimension mismatch");
  if (w.style == AttentionStyle::Multiplicative) return row_dots(linear(h_tar, w.W), mem.states);
  Var q = linear(h_tar, w.W1);
  std::vector<Var> cols;
  cols.reserve(mem.length());
  for (Var k : mem.keys) cols.push_back(linear(tanh_act(add(q, k)), w.v_a));
  return concat_cols(cols);
}

/// Softmax over unmasked source positions; masked weights are exactly 0.
inline Var attention_weights(Var scores, const AttentionMemory& mem) { return masked_softmax_rows(scores, mem.mask); }

/// c_det = sum_i alpha_i h_src_i.
inline Var attention_context(Var alpha, const AttentionMemory& mem) { return mix_rows(alpha, mem.states); }

struct ContextPosterior {
  Var mu;
  Var logvar;
  Var sigma;
};

/// mu_c is c_det itself. log sigma_c^2 = A2 tanh(A1 c_det + b1) + b2.
inline ContextPosterior attn_posterior(const AttentionWeights& w, Var c_det) {
  if (!w.variational) throw std::logic_error("attn_posterior: attention is deterministic");
  Var hidden = tanh_act(affine(c_det, w.var_A1, w.var_b1));
  Var logvar = affine(hidden, w.var_A2, w.var_b2);
  return {c_det, logvar, exp_act(scale(logvar, 0.5))};
}

struct AttnPrior {
  AttnPriorKind kind = AttnPriorKind::StandardNormal;
  std::optional<Var> mean;  // h-bar for MeanSource
};

/// Mean of the unmasked source states per row.
inline Var mean_source_state(const AttentionMemory& mem) {
  const std::size_t n = mem.batch, len = mem.length();
  Tensor w = Tensor::zeros(n, len);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cnt = 0;
    for (std::size_t j = 0; j < len; ++j) cnt += mem.mask[i * len + j];
    if (cnt == 0) throw std::invalid_argument("mean_source_state: row without source tokens");
    for (std::size_t j = 0; j < len; ++j)
      if (mem.mask[i * len + j]) w.at(i, j) = 1.0 / static_cast<double>(cnt);
  }
  return mix_rows(mem.states.front().tape->constant(std::move(w)), mem.states);
}

inline AttnPrior make_prior(AttnPriorKind kind, const AttentionMemory& mem) {
  if (kind == AttnPriorKind::StandardNormal) return {kind, std::nullopt};
  return {kind, mean_source_state(mem)};
}

/// Per-row KL(N(mu_c, sigma_c^2) || N(m, I)), batch x 1.
inline Var attn_kl(const ContextPosterior& post, const AttnPrior& prior) {
  return kl_diag_gaussian_rows(post.mu, post.logvar, prior.mean);
}

/// a_j = tanh(W_c [c_j ; h_tar_j]).
inline Var attention_vector(const AttentionWeights& w, Var c, Var h_tar) {
  return tanh_act(linear(concat_cols({c, h_tar}), w.W_c));
}

/// J_rec + lambda * (kl_z + gamma_a * sum_j kl_c_j).
inline double ved_objective(double j_rec, double kl_z, const std::vector<double>& kl_c, double lambda,
                            double gamma_a) {
  if (kl_z < 0.0) throw std::invalid_argument("ved_objective: negative KL");
  double s = 0.0;
  for (double k : kl_c) {
    if (k < 0.0) throw std::invalid_argument("ved_objective: negative attention KL");
    s += k;
  }
  return j_rec + lambda * (kl_z + gamma_a * s);
}

}  // namespace seqvae
