#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "seqvae/ops.hpp"
#include "seqvae/optim.hpp"
#include "seqvae/rng.hpp"

namespace seqvae {

/// Diagonal Gaussian N(mu, sigma^2) over a batch of rows. sigma is always
/// exp(logvar / 2), so it stays strictly positive.
struct GaussianPosterior {
  Var mu;
  Var logvar;
  Var sigma;
};

/// Two affine heads mapping an encoder state to (mu, log sigma^2).
struct PosteriorParams {
  Parameter A_mu, b_mu, A_s, b_s;

  static PosteriorParams init(std::size_t d_z, std::size_t d_h, Rng& rng) {
    PosteriorParams p;
    p.A_mu = Parameter("post.A_mu", glorot_uniform(rng, d_z, d_h));
    p.b_mu = Parameter("post.b_mu", Tensor({1, d_z}));
    p.A_s = Parameter("post.A_s", glorot_uniform(rng, d_z, d_h));
    p.b_s = Parameter("post.b_s", Tensor({1, d_z}));
    return p;
  }

  ParamList params() { return {&A_mu, &b_mu, &A_s, &b_s}; }
};

struct PosteriorWeights {
  Var A_mu, b_mu, A_s, b_s;
};

inline PosteriorWeights bind(Tape& t, PosteriorParams& p) {
  return {t.param(p.A_mu), t.param(p.b_mu), t.param(p.A_s), t.param(p.b_s)};
}
inline PosteriorWeights bind(Tape& t, const PosteriorParams& p) {
  return {t.frozen(p.A_mu), t.frozen(p.b_mu), t.frozen(p.A_s), t.frozen(p.b_s)};
}

inline GaussianPosterior posterior_from_hidden(const PosteriorWeights& w, Var h) {
  Var mu = affine(h, w.A_mu, w.b_mu);
  Var logvar = affine(h, w.A_s, w.b_s);
  return {mu, logvar, exp_act(scale(logvar, 0.5))};
}

/// z = mu + sigma * eps. eps enters as a constant, so nothing flows into it.
inline Var reparameterize(const GaussianPosterior& post, const Tensor& eps) {
  const Tensor& mu = post.mu.value();
  if (eps.rows() != mu.rows() || eps.cols() != mu.cols())
    throw ShapeError("reparameterize: noise is " + detail::dims(eps) + ", posterior is " + detail::dims(mu));
  Var noise = post.mu.tape->constant(Tensor::matrix(mu.rows(), mu.cols(), eps.data()));
  return add(post.mu, mul(post.sigma, noise));
}

/// Per-row KL(N(mu, sigma^2) || N(m, I)) = 1/2 sum(sigma^2 + (mu - m)^2 - 1 - log sigma^2),
/// returned as an n x 1 column. `prior_mean` absent means m = 0.
inline Var kl_diag_gaussian_rows(Var mu, Var logvar, std::optional<Var> prior_mean = std::nullopt) {
  Var diff = prior_mean ? sub(mu, *prior_mean) : mu;
  Var terms = sub(add(exp_act(logvar), square(diff)), add_scalar(logvar, 1.0));
  return scale(sum_cols(terms), 0.5);
}

/// KL to the standard normal prior, averaged over the batch rows.
inline Var kl_standard_normal(const GaussianPosterior& post) {
  Var rows = kl_diag_gaussian_rows(post.mu, post.logvar);
  const std::size_t n = rows.rows();
  return weighted_sum(rows, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

/// Closed form on plain values; mu and sigma are flat vectors of equal size.
inline double kl_standard_normal(const Tensor& mu, const Tensor& sigma) {
  if (mu.size() != sigma.size()) throw ShapeError("kl_standard_normal: size mismatch");
  double kl = 0.0;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    if (!(sigma[d] > 0.0)) throw std::invalid_argument("kl_standard_normal: sigma must be positive");
    const double s2 = sigma[d] * sigma[d];
    kl += mu[d] * mu[d] + s2 - 1.0 - std::log(s2);
  }
  return 0.5 * kl;
}

enum class AnnealKind { Constant, Tanh, Linear };

inline AnnealKind parse_anneal_kind(const std::string& s) {
  if (s == "constant") return AnnealKind::Constant;
  if (s == "tanh") return AnnealKind::Tanh;
  if (s == "linear") return AnnealKind::Linear;
  throw std::invalid_argument("unknown annealing schedule '" + s + "'");
}

inline std::string to_string(AnnealKind k) {
  switch (k) {
    case AnnealKind::Constant: return "constant";
    case AnnealKind::Tanh: return "tanh";
    case AnnealKind::Linear: return "linear";
  }
  return "?";
}

/// KL weight schedule. Annealed kinds follow their curve up to `freeze_at`
/// and hold that value afterwards; an empty `freeze_at` never freezes.
struct AnnealSchedule {
  AnnealKind kind = AnnealKind::Tanh;
  double lambda_const = 1.0;
  std::optional<long long> freeze_at = 3000;

  static AnnealSchedule constant(double lambda) { return {AnnealKind::Constant, lambda, std::nullopt}; }
  static AnnealSchedule tanh(std::optional<long long> freeze = 3000) { return {AnnealKind::Tanh, 0.0, freeze}; }
  static AnnealSchedule linear(std::optional<long long> freeze = 10000) { return {AnnealKind::Linear, 0.0, freeze}; }

  static long long default_freeze(AnnealKind k) { return k == AnnealKind::Linear ? 10000 : 3000; }
};

namespace detail {
inline double anneal_curve(AnnealKind k, long long i) {
  const double x = static_cast<double>(i);
  if (k == AnnealKind::Tanh) return (std::tanh((x - 4500.0) / 1000.0) + 1.0) / 2.0;
  return std::min(1.0, x / 200000.0);
}
}  // namespace detail

inline double kl_weight(const AnnealSchedule& s, long long iteration) {
  if (iteration < 0) throw std::invalid_argument("kl_weight: negative iteration");
  if (s.kind == AnnealKind::Constant) return s.lambda_const;
  const long long i = s.freeze_at ? std::min(iteration, *s.freeze_at) : iteration;
  return detail::anneal_curve(s.kind, i);
}

/// Word-dropout rate for a zero-based epoch: +0.05 per completed epoch,
/// capped at 0.5.
inline double dropout_schedule(long long epoch) {
  if (epoch < 0) throw std::invalid_argument("dropout_schedule: negative epoch");
  return std::min(0.05 * static_cast<double>(epoch), 0.5);
}

struct VaeLoss {
  double j_rec = 0.0;
  double kl_z = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

inline VaeLoss vae_objective(double j_rec, double kl_z, double lambda) {
  if (kl_z < 0.0) throw std::invalid_argument("vae_objective: negative KL");
  return {j_rec, kl_z, lambda, j_rec + lambda * kl_z};
}

}  // namespace seqvae
