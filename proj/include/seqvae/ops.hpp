#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "seqvae/tape.hpp"
#include "seqvae/tensor.hpp"

namespace seqvae {

namespace detail {

// C += A * B, A: n x k, B: k x p. Each output sums over k in ascending
// order regardless of n, so results do not depend on the batch size.
inline void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                        std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * p;
    const double* arow = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T, A: n x k, B: p x k. B is transposed once so the inner loop
// runs over contiguous output columns.
inline void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                        std::size_t p) {
  std::vector<double> bt(k * p);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t kk = 0; kk < k; ++kk) bt[kk * p + j] = b[j * k + kk];
  gemm_nn_acc(a, bt.data(), c, n, k, p);
}

// C += A^T * B, A: n x k, B: n x p, C: k x p.
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                        std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* crow = c + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

inline std::string dims(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

inline Tensor like(const Tensor& t) { return Tensor({t.rows(), t.cols()}); }

inline void add_into(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <class F>
Var unary(const char* op, Var x, F f, auto dfdx_from_xy) {
  const Tensor& xv = x.value();
  Tensor y = like(xv);
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  return x.tape->record(op, std::move(y), {x}, [x, dfdx_from_xy](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    const Tensor& xv = t.value(x);
    const Tensor& yv = t.value(Var{&t, self});
    Tensor& gx = t.grad(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx_from_xy(xv[i], yv[i]);
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plain tensor functions (no tape).

/// Numerically stable softmax of a vector (max subtracted first).
inline Tensor softmax(const Tensor& v) {
  if (v.empty()) throw ShapeError("softmax: empty vector");
  Tensor out(v.shape());
  const double mx = *std::max_element(v.values().begin(), v.values().end());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) sum += (out[i] = std::exp(v[i] - mx));
  for (double& o : out.values()) o /= sum;
  return out;
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = detail::stable_sigmoid(x[i]);
  return y;
}

inline Tensor tanh_act(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

// ---------------------------------------------------------------------------
// Differentiable operations. Operands are treated as matrices (rank-1 values
// are single rows).

inline Var sigmoid(Var x) {
  return detail::unary("sigmoid", x, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh_act(Var x) {
  return detail::unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var exp_act(Var x) {
  return detail::unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var square(Var x) {
  return detail::unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Var scale(Var x, double s) {
  return detail::unary("scale", x, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

inline Var add_scalar(Var x, double s) {
  return detail::unary("add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

inline Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require(av.same_shape(bv), "add", detail::dims(av) + " vs " + detail::dims(bv));
  Tensor y = detail::like(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return a.tape->record("add", std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    if (t.needs(a.id)) detail::add_into(t.grad(a.id), g);
    if (t.needs(b.id)) detail::add_into(t.grad(b.id), g);
  });
}

inline Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require(av.same_shape(bv), "sub", detail::dims(av) + " vs " + detail::dims(bv));
  Tensor y = detail::like(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return a.tape->record("sub", std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    if (t.needs(a.id)) detail::add_into(t.grad(a.id), g);
    if (t.needs(b.id)) {
      Tensor& gb = t.grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require(av.same_shape(bv), "mul", detail::dims(av) + " vs " + detail::dims(bv));
  Tensor y = detail::like(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return a.tape->record("mul", std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.needs(a.id)) {
      Tensor& ga = t.grad(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs(b.id)) {
      Tensor& gb = t.grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

/// A (n x k) times B (k x p).
inline Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows(), k = av.cols(), p = bv.cols();
  detail::require(bv.rows() == k, "matmul", detail::dims(av) + " * " + detail::dims(bv));
  Tensor y = Tensor::zeros(n, p);
  detail::gemm_nn_acc(av.values().data(), bv.values().data(), y.values().data(), n, k, p);
  return a.tape->record("matmul", std::move(y), {a, b}, [a, b, n, k, p](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    if (t.needs(a.id))
      detail::gemm_nt_acc(g.values().data(), t.value(b).values().data(), t.grad(a.id).values().data(), n, p, k);
    if (t.needs(b.id))
      detail::gemm_tn_acc(t.value(a).values().data(), g.values().data(), t.grad(b.id).values().data(), n, k, p);
  });
}

/// X (n x in) times W^T where W is (out x in).
inline Var linear(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const std::size_t n = xv.rows(), k = xv.cols(), p = wv.rows();
  detail::require(wv.cols() == k, "linear", detail::dims(xv) + " * (" + detail::dims(wv) + ")^T");
  Tensor y = Tensor::zeros(n, p);
  detail::gemm_nt_acc(xv.values().data(), wv.values().data(), y.values().data(), n, k, p);
  return x.tape->record("linear", std::move(y), {x, w}, [x, w, n, k, p](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    if (t.needs(x.id))
      detail::gemm_nn_acc(g.values().data(), t.value(w).values().data(), t.grad(x.id).values().data(), n, p, k);
    if (t.needs(w.id))
      detail::gemm_tn_acc(g.values().data(), t.value(x).values().data(), t.grad(w.id).values().data(), n, p, k);
  });
}

/// Adds a bias row (1 x cols) to every row of X.
inline Var add_bias(Var x, Var b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  detail::require(bv.size() == c, "add_bias", detail::dims(xv) + " + bias of " + std::to_string(bv.size()));
  Tensor y = detail::like(xv);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = xv[i * c + j] + bv[j];
  return x.tape->record("add_bias", std::move(y), {x, b}, [x, b, n, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    if (t.needs(x.id)) detail::add_into(t.grad(x.id), g);
    if (t.needs(b.id)) {
      Tensor& gb = t.grad(b.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
    }
  });
}

/// Affine layer: X W^T + b.
inline Var affine(Var x, Var w, Var b) { return add_bias(linear(x, w), b); }

inline Var concat_cols(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_cols", "no operands");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    detail::require(p.rows() == n, "concat_cols", "row mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor y = Tensor::zeros(n, total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(pv.values().data() + i * widths[k], widths[k], y.values().data() + i * total + off);
    off += widths[k];
  }
  return parts.front().tape->record("concat_cols", std::move(y), parts,
                                    [parts, widths, n, total](Tape& t, std::size_t self) {
                                      const Tensor& g = t.grad_view(self);
                                      std::size_t off = 0;
                                      for (std::size_t k = 0; k < parts.size(); ++k) {
                                        if (t.needs(parts[k].id)) {
                                          Tensor& gp = t.grad(parts[k].id);
                                          for (std::size_t i = 0; i < n; ++i)
                                            for (std::size_t j = 0; j < widths[k]; ++j)
                                              gp[i * widths[k] + j] += g[i * total + off + j];
                                        }
                                        off += widths[k];
                                      }
                                    });
}

inline Var slice_cols(Var x, std::size_t start, std::size_t len) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  detail::require(len > 0 && start + len <= c, "slice_cols", "range out of bounds");
  Tensor y = Tensor::zeros(n, len);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(xv.values().data() + i * c + start, len, y.values().data() + i * len);
  return x.tape->record("slice_cols", std::move(y), {x}, [x, start, len, n, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    Tensor& gx = t.grad(x.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < len; ++j) gx[i * c + start + j] += g[i * len + j];
  });
}

/// Gathers rows of an embedding table.
inline Var embedding(Var table, const std::vector<std::size_t>& indices) {
  const Tensor& tv = table.value();
  const std::size_t d = tv.cols(), vocab = tv.rows();
  detail::require(!indices.empty(), "embedding", "no indices");
  Tensor y = Tensor::zeros(indices.size(), d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    detail::require(indices[i] < vocab, "embedding", "index out of range");
    std::copy_n(tv.values().data() + indices[i] * d, d, y.values().data() + i * d);
  }
  return table.tape->record("embedding", std::move(y), {table}, [table, indices, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    Tensor& gt = t.grad(table.id);
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[indices[i] * d + j] += g[i * d + j];
  });
}

/// Sum of all entries, as a 1 x 1 value.
inline Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  return x.tape->record("sum", Tensor::scalar(s), {x}, [x](Tape& t, std::size_t self) {
    const double g = t.grad_view(self)[0];
    for (double& v : t.grad(x.id).values()) v += g;
  });
}

/// Per-row sum, n x c -> n x 1.
inline Var sum_cols(Var x) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  Tensor y = Tensor::zeros(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i] += xv[i * c + j];
  return x.tape->record("sum_cols", std::move(y), {x}, [x, n, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    Tensor& gx = t.grad(x.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i];
  });
}

/// Weighted sum of column entries: sum_i w_i x_i for an n x 1 input.
inline Var weighted_sum(Var x, std::vector<double> weights) {
  const Tensor& xv = x.value();
  detail::require(weights.size() == xv.size(), "weighted_sum", "weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * xv[i];
  return x.tape->record("weighted_sum", Tensor::scalar(s), {x}, [x, weights](Tape& t, std::size_t self) {
    const double g = t.grad_view(self)[0];
    Tensor& gx = t.grad(x.id);
    for (std::size_t i = 0; i < weights.size(); ++i) gx[i] += g * weights[i];
  });
}

/// Multiplies row i of X (n x c) by the scalar s[i] (s is n x 1).
inline Var mul_rows(Var x, Var s) {
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  detail::require(sv.size() == n, "mul_rows", "scale count mismatch");
  Tensor y = detail::like(xv);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = xv[i * c + j] * sv[i];
  return x.tape->record("mul_rows", std::move(y), {x, s}, [x, s, n, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    const Tensor& xv = t.value(x);
    const Tensor& sv = t.value(s);
    if (t.needs(x.id)) {
      Tensor& gx = t.grad(x.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * c + j] * sv[i];
    }
    if (t.needs(s.id)) {
      Tensor& gs = t.grad(s.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) gs[i] += g[i * c + j] * xv[i * c + j];
    }
  });
}

/// Row-wise dot products of Q (n x d) against each memory slot M_k (n x d),
/// giving an n x K score matrix.
inline Var row_dots(Var q, const std::vector<Var>& memory) {
  const Tensor& qv = q.value();
  const std::size_t n = qv.rows(), d = qv.cols(), slots = memory.size();
  detail::require(slots > 0, "row_dots", "empty memory");
  Tensor y = Tensor::zeros(n, slots);
  for (std::size_t k = 0; k < slots; ++k) {
    const Tensor& mv = memory[k].value();
    detail::require(mv.rows() == n && mv.cols() == d, "row_dots", "memory slot shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += qv[i * d + j] * mv[i * d + j];
      y[i * slots + k] = s;
    }
  }
  std::vector<Var> inputs{q};
  inputs.insert(inputs.end(), memory.begin(), memory.end());
  return q.tape->record("row_dots", std::move(y), inputs, [q, memory, n, d, slots](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    const Tensor& qv = t.value(q);
    for (std::size_t k = 0; k < slots; ++k) {
      const Tensor& mv = t.value(memory[k]);
      if (t.needs(q.id)) {
        Tensor& gq = t.grad(q.id);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gq[i * d + j] += g[i * slots + k] * mv[i * d + j];
      }
      if (t.needs(memory[k].id)) {
        Tensor& gm = t.grad(memory[k].id);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gm[i * d + j] += g[i * slots + k] * qv[i * d + j];
      }
    }
  });
}

/// Mixes memory slots with per-row weights: out_i = sum_k W[i,k] M_k[i].
inline Var mix_rows(Var weights, const std::vector<Var>& memory) {
  const Tensor& wv = weights.value();
  const std::size_t n = wv.rows(), slots = wv.cols();
  detail::require(memory.size() == slots, "mix_rows", "slot count mismatch");
  const std::size_t d = memory.front().cols();
  Tensor y = Tensor::zeros(n, d);
  for (std::size_t k = 0; k < slots; ++k) {
    const Tensor& mv = memory[k].value();
    detail::require(mv.rows() == n && mv.cols() == d, "mix_rows", "memory slot shape mismatch");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) y[i * d + j] += wv[i * slots + k] * mv[i * d + j];
  }
  std::vector<Var> inputs{weights};
  inputs.insert(inputs.end(), memory.begin(), memory.end());
  return weights.tape->record("mix_rows", std::move(y), inputs,
                              [weights, memory, n, d, slots](Tape& t, std::size_t self) {
                                const Tensor& g = t.grad_view(self);
                                const Tensor& wv = t.value(weights);
                                for (std::size_t k = 0; k < slots; ++k) {
                                  const Tensor& mv = t.value(memory[k]);
                                  if (t.needs(weights.id)) {
                                    Tensor& gw = t.grad(weights.id);
                                    for (std::size_t i = 0; i < n; ++i) {
                                      double s = 0.0;
                                      for (std::size_t j = 0; j < d; ++j) s += g[i * d + j] * mv[i * d + j];
                                      gw[i * slots + k] += s;
                                    }
                                  }
                                  if (t.needs(memory[k].id)) {
                                    Tensor& gm = t.grad(memory[k].id);
                                    for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < d; ++j)
                                        gm[i * d + j] += g[i * d + j] * wv[i * slots + k];
                                  }
                                }
                              });
}

/// Row-wise softmax restricted to entries whose mask is nonzero. Masked
/// entries come out as exactly 0. An empty mask means "all visible".
inline Var masked_softmax_rows(Var scores, const std::vector<std::uint8_t>& mask = {}) {
  const Tensor& sv = scores.value();
  const std::size_t n = sv.rows(), c = sv.cols();
  detail::require(mask.empty() || mask.size() == n * c, "masked_softmax_rows", "mask size mismatch");
  Tensor y = detail::like(sv);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (mask.empty() || mask[i * c + j]) mx = std::max(mx, sv[i * c + j]);
    if (!std::isfinite(mx)) throw std::invalid_argument("masked_softmax_rows: every entry of a row is masked");
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (mask.empty() || mask[i * c + j]) s += (y[i * c + j] = std::exp(sv[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] /= s;
  }
  return scores.tape->record("softmax", std::move(y), {scores}, [scores, n, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_view(self);
    const Tensor& y = t.value(Var{&t, self});
    Tensor& gs = t.grad(scores.id);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gs[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

/// sum_i w_i * (-log softmax(logits_i)[target_i]); rows with w_i == 0 are
/// skipped entirely.
inline Var softmax_cross_entropy(Var logits, const std::vector<std::size_t>& targets,
                                 const std::vector<double>& row_weights) {
  const Tensor& lv = logits.value();
  const std::size_t n = lv.rows(), c = lv.cols();
  detail::require(targets.size() == n && row_weights.size() == n, "softmax_cross_entropy", "batch size mismatch");
  Tensor probs = detail::like(lv);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (row_weights[i] == 0.0) continue;
    detail::require(targets[i] < c, "softmax_cross_entropy", "target out of range");
    double mx = lv[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (probs[i * c + j] = std::exp(lv[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= s;
    loss += row_weights[i] * (std::log(s) - (lv[i * c + targets[i]] - mx));
  }
  return logits.tape->record(
      "softmax_cross_entropy", Tensor::scalar(loss), {logits},
      [logits, targets, row_weights, probs = std::move(probs), n, c](Tape& t, std::size_t self) {
        const double g = t.grad_view(self)[0];
        Tensor& gl = t.grad(logits.id);
        for (std::size_t i = 0; i < n; ++i) {
          if (row_weights[i] == 0.0) continue;
          const double w = g * row_weights[i];
          for (std::size_t j = 0; j < c; ++j) gl[i * c + j] += w * probs[i * c + j];
          gl[i * c + targets[i]] -= w;
        }
      });
}

}  // namespace seqvae
