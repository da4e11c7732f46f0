#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "seqvae/metrics.hpp"
#include "seqvae/seq2seq.hpp"

namespace seqvae {

using TokenIds = std::vector<std::size_t>;

struct ProbeConfig {
  std::size_t k = 10;
  double scale = 1.0;
  std::vector<double> alphas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::uint64_t seed = 0;
};

inline std::vector<TokenIds> tokens_of(const std::vector<DecodeResult>& rs) {
  std::vector<TokenIds> out;
  out.reserve(rs.size());
  for (const auto& r : rs) out.push_back(r.tokens);
  return out;
}

inline Tokens to_words(const TokenIds& ids, const Vocabulary& vocab) { return decode_tokens(ids, vocab); }

/// Greedy decode with z = mu and every attention context at its mean.
inline std::vector<TokenIds> map_reconstruct(const Seq2SeqModel& model, const std::vector<TokenSequence>& sources) {
  return tokens_of(greedy_decode(model, sources));
}

/// z ~ N(0, I), decoded from the zero state without the encoder.
inline std::vector<TokenIds> random_sample(const Seq2SeqModel& model, std::size_t n, Rng& rng) {
  if (model.spec.latent != LatentMode::Gaussian) throw std::invalid_argument("random_sample: model has no latent prior");
  if (model.spec.attention != AttentionMode::None)
    throw std::invalid_argument("random_sample: attention models need a source sentence");
  DecodeOptions opt;
  opt.z = standard_normal(rng, {n, model.spec.latent_dim});
  opt.init = std::make_pair(Tensor::zeros(n, model.spec.hidden_dim), Tensor::zeros(n, model.spec.hidden_dim));
  return tokens_of(greedy_decode(model, {}, opt, nullptr, n));
}

/// Decodes z = alpha z_A + (1 - alpha) z_B for each alpha, with z_A, z_B the
/// posterior means. When the bypass is on, the decoder start state is
/// interpolated the same way.
inline std::vector<TokenIds> interpolate(const Seq2SeqModel& model, const TokenSequence& a, const TokenSequence& b,
                                         const std::vector<double>& alphas) {
  if (!model.spec.conditions_on_latent()) throw std::invalid_argument("interpolate: model has no latent code");
  if (model.spec.attention != AttentionMode::None)
    throw std::invalid_argument("interpolate: attention models decode from the source, not from z alone");
  if (alphas.empty()) throw std::invalid_argument("interpolate: empty alpha grid");
  const EncodedValues e = encode_values(model, {a, b});
  const std::size_t n = alphas.size(), dz = model.spec.latent_dim, dh = model.spec.hidden_dim;
  auto mix = [&](const Tensor& src, std::size_t d) {
    Tensor out = Tensor::zeros(n, d);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < d; ++k)
        out.at(r, k) = alphas[r] * src.at(0, k) + (1.0 - alphas[r]) * src.at(1, k);
    return out;
  };
  DecodeOptions opt;
  opt.z = mix(e.mu, dz);
  if (model.spec.bypass)
    opt.init = std::make_pair(mix(e.h, dh), mix(e.c, dh));
  else
    opt.init = std::make_pair(Tensor::zeros(n, dh), Tensor::zeros(n, dh));
  return tokens_of(greedy_decode(model, {}, opt, nullptr, n));
}

/// z = mu + s sigma * eps; for variational attention every context sample
/// uses the same scale.
inline std::vector<TokenIds> neighborhood_sample(const Seq2SeqModel& model, const std::vector<TokenSequence>& sources,
                                                 double scale, Rng& rng) {
  if (!model.spec.stochastic()) throw std::invalid_argument("neighborhood_sample: model is deterministic");
  if (scale < 0.0) throw std::invalid_argument("neighborhood_sample: scale must be nonnegative");
  DecodeOptions opt;
  opt.noise_scale = scale;
  return tokens_of(greedy_decode(model, sources, opt, &rng));
}

/// Token-level Levenshtein distance.
inline std::size_t edit_distance(const TokenIds& a, const TokenIds& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Per input: k neighborhood samples at scale 1; entropy and distinct-n over
/// the k outputs, BLEU as the mean over the k samples against the reference.
/// Diversity values are averaged over the inputs where they are defined.
inline MetricsReport diversity_probe(const Seq2SeqModel& model, const std::vector<TokenSequence>& sources,
                                     const std::vector<Tokens>& references, const Vocabulary& vocab, std::size_t k,
                                     Rng& rng) {
  if (k < 2) throw std::invalid_argument("diversity_probe: need at least two samples per input");
  if (sources.size() != references.size() || sources.empty())
    throw std::invalid_argument("diversity_probe: sources and references must be nonempty and aligned");
  const std::size_t n = sources.size();
  std::vector<SentenceSet> per_input(n);
  for (std::size_t draw = 0; draw < k; ++draw) {
    auto outs = neighborhood_sample(model, sources, 1.0, rng);
    for (std::size_t i = 0; i < n; ++i) per_input[i].push_back(to_words(outs[i], vocab));
  }
  MetricsReport rep;
  rep.inference = "sampling";
  rep.n_inputs = n;
  rep.n_samples = k;
  double ent = 0, d1 = 0, d2 = 0;
  std::size_t n_ent = 0, n_d1 = 0, n_d2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& set = per_input[i];
    for (int j = 1; j <= 4; ++j) {
      double s = 0.0;
      for (const auto& sent : set) s += bleu_j(sent, references[i], j);
      rep.bleu[j - 1] += s / static_cast<double>(k);
    }
    std::size_t toks = 0, bigrams = 0;
    for (const auto& sent : set) {
      toks += sent.size();
      bigrams += sent.size() >= 2 ? sent.size() - 1 : 0;
    }
    if (toks > 0) {
      ent += entropy(set);
      d1 += distinct_n(set, 1);
      ++n_ent;
      ++n_d1;
    }
    if (bigrams > 0) {
      d2 += distinct_n(set, 2);
      ++n_d2;
    }
  }
  for (double& b : rep.bleu) b /= static_cast<double>(n);
  if (n_ent) rep.entropy = ent / static_cast<double>(n_ent);
  if (n_d1) rep.distinct_1 = d1 / static_cast<double>(n_d1);
  if (n_d2) rep.distinct_2 = d2 / static_cast<double>(n_d2);
  return rep;
}

/// MAP-mode report: BLEU of the greedy mean decode only.
inline MetricsReport map_report(const Seq2SeqModel& model, const std::vector<TokenSequence>& sources,
                                const std::vector<Tokens>& references, const Vocabulary& vocab) {
  if (sources.size() != references.size() || sources.empty())
    throw std::invalid_argument("map_report: sources and references must be nonempty and aligned");
  auto outs = map_reconstruct(model, sources);
  SentenceSet gen;
  for (const auto& o : outs) gen.push_back(to_words(o, vocab));
  MetricsReport rep;
  rep.inference = "map";
  rep.n_inputs = sources.size();
  rep.n_samples = 1;
  for (int j = 1; j <= 4; ++j) rep.bleu[j - 1] = corpus_bleu(gen, references, j);
  return rep;
}

}  // namespace seqvae
