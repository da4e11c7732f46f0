#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqvae/tensor.hpp"

namespace seqvae {

using ParamList = std::vector<Parameter*>;

inline void zero_grads(const ParamList& params) {
  for (Parameter* p : params) p->zero_grad();
}

namespace detail {
inline void check_grads(const ParamList& params, const char* who) {
  for (const Parameter* p : params)
    if (!p->grad.all_finite()) throw NumericError(std::string(who) + ": non-finite gradient in " + p->name);
}
}  // namespace detail

/// w <- w - lr * grad
inline void sgd_step(const ParamList& params, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be positive");
  detail::check_grads(params, "sgd_step");
  for (Parameter* p : params) {
    auto w = p->value.values();
    auto g = p->grad.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
  }
}

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one pair per parameter, in the order
/// of the parameter list they were created for.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long long t = 0;

  static AdamState for_params(const ParamList& params) {
    AdamState s;
    for (const Parameter* p : params) {
      s.m.emplace_back(p->value.shape());
      s.v.emplace_back(p->value.shape());
    }
    return s;
  }
};

/// One bias-corrected Adam update at step `t` (1-based).
inline void adam_step(const ParamList& params, AdamState& state, const AdamConfig& cfg, long long t) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (t < 1) throw std::invalid_argument("adam_step: step counter starts at 1");
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  detail::check_grads(params, "adam_step");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->value.values();
    auto g = params[k]->grad.values();
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  state.t = t;
}

enum class OptimizerKind { Adam, Sgd };

/// Owns the optimizer state for one training run.
class Optimizer {
public:
  Optimizer(OptimizerKind kind, double lr, const ParamList& params) : kind_(kind), params_(params) {
    adam_cfg_.lr = lr;
    if (kind_ == OptimizerKind::Adam) adam_ = AdamState::for_params(params_);
  }

  void step() {
    if (kind_ == OptimizerKind::Sgd) {
      sgd_step(params_, adam_cfg_.lr);
    } else {
      adam_step(params_, adam_, adam_cfg_, adam_.t + 1);
    }
  }

  OptimizerKind kind() const noexcept { return kind_; }
  double lr() const noexcept { return adam_cfg_.lr; }
  AdamState& adam_state() noexcept { return adam_; }
  const AdamState& adam_state() const noexcept { return adam_; }

private:
  OptimizerKind kind_;
  ParamList params_;
  AdamConfig adam_cfg_;
  AdamState adam_;
};

}  // namespace seqvae
