#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "seqvae/ops.hpp"
#include "seqvae/optim.hpp"
#include "seqvae/rng.hpp"

namespace seqvae {

/// Gate blocks are stacked row-wise in the order input, forget, output,
/// candidate: W is 4*d_h x d_in, U is 4*d_h x d_h, b has 4*d_h entries.
enum class Gate : std::size_t { Input = 0, Forget = 1, Output = 2, Candidate = 3 };

struct LstmParams {
  std::size_t d_in = 0;
  std::size_t d_h = 0;
  Parameter W;
  Parameter U;
  Parameter b;

  /// Glorot-uniform weights per gate block; forget bias 1, other biases 0.
  static LstmParams init(const std::string& prefix, std::size_t d_in, std::size_t d_h, Rng& rng) {
    LstmParams p;
    p.d_in = d_in;
    p.d_h = d_h;
    const double rw = std::sqrt(6.0 / static_cast<double>(d_in + d_h));
    const double ru = std::sqrt(6.0 / static_cast<double>(2 * d_h));
    Tensor w({4 * d_h, d_in});
    for (double& v : w.values()) v = rng.uniform(-rw, rw);
    Tensor u({4 * d_h, d_h});
    for (double& v : u.values()) v = rng.uniform(-ru, ru);
    Tensor b({1, 4 * d_h});
    for (std::size_t j = 0; j < d_h; ++j) b[d_h + j] = 1.0;
    p.W = Parameter(prefix + ".W", std::move(w));
    p.U = Parameter(prefix + ".U", std::move(u));
    p.b = Parameter(prefix + ".b", std::move(b));
    return p;
  }

  ParamList params() { return {&W, &U, &b}; }

  /// Copy of one gate's block of W (d_h x d_in), U (d_h x d_h) or b (1 x d_h).
  Tensor block(const Parameter& which, Gate g) const {
    const std::size_t cols = which.value.cols();
    const std::size_t start = static_cast<std::size_t>(g) * d_h;
    if (&which == &b) {
      std::vector<double> v(b.value.values().begin() + static_cast<std::ptrdiff_t>(start),
                            b.value.values().begin() + static_cast<std::ptrdiff_t>(start + d_h));
      return Tensor::matrix(1, d_h, std::move(v));
    }
    std::vector<double> v(which.value.values().begin() + static_cast<std::ptrdiff_t>(start * cols),
                          which.value.values().begin() + static_cast<std::ptrdiff_t>((start + d_h) * cols));
    return Tensor::matrix(d_h, cols, std::move(v));
  }
};

/// LstmParams bound to one tape.
struct LstmWeights {
  Var W, U, b;
  std::size_t d_in = 0;
  std::size_t d_h = 0;
};

inline LstmWeights bind(Tape& t, LstmParams& p) { return {t.param(p.W), t.param(p.U), t.param(p.b), p.d_in, p.d_h}; }
inline LstmWeights bind(Tape& t, const LstmParams& p) {
  return {t.frozen(p.W), t.frozen(p.U), t.frozen(p.b), p.d_in, p.d_h};
}

struct LstmState {
  Var h;
  Var c;
};

inline LstmState zero_state(Tape& t, std::size_t batch, std::size_t d_h) {
  return {t.constant(Tensor::zeros(batch, d_h)), t.constant(Tensor::zeros(batch, d_h))};
}

/// One LSTM step for a batch of inputs (rows of x).
inline LstmState cell_step(const LstmWeights& w, Var x, const LstmState& prev) {
  if (x.cols() != w.d_in)
    throw ShapeError("cell_step: input width " + std::to_string(x.cols()) + ", expected " + std::to_string(w.d_in));
  if (prev.h.cols() != w.d_h || prev.c.cols() != w.d_h || prev.h.rows() != x.rows())
    throw ShapeError("cell_step: previous state does not match hidden size or batch");
  const std::size_t d = w.d_h;
  Var z = add_bias(add(linear(x, w.W), linear(prev.h, w.U)), w.b);
  Var i = sigmoid(slice_cols(z, 0, d));
  Var f = sigmoid(slice_cols(z, d, d));
  Var o = sigmoid(slice_cols(z, 2 * d, d));
  Var g = tanh_act(slice_cols(z, 3 * d, d));
  Var c = add(mul(i, g), mul(f, prev.c));
  Var h = mul(o, tanh_act(c));
  return {h, c};
}

struct EncoderOutput {
  std::vector<Var> outputs;
  LstmState final;
};

/// Runs the cell left to right from the zero state. Every position is
/// processed, padding included.
inline EncoderOutput encode(const LstmWeights& w, const std::vector<Var>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("lstm encode: empty sequence");
  Tape& t = *inputs.front().tape;
  LstmState s = zero_state(t, inputs.front().rows(), w.d_h);
  EncoderOutput out;
  out.outputs.reserve(inputs.size());
  for (Var x : inputs) {
    s = cell_step(w, x, s);
    out.outputs.push_back(s.h);
  }
  out.final = s;
  return out;
}

}  // namespace seqvae
