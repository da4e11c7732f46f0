#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqvae/text.hpp"

namespace seqvae {

using SentenceSet = std::vector<Tokens>;

/// Drops the reserved special tokens before scoring.
inline Tokens strip_special(const Tokens& toks) {
  Tokens out;
  for (const auto& t : toks) {
    bool reserved = false;
    for (auto name : special::names) reserved = reserved || t == name;
    if (!reserved) out.push_back(t);
  }
  return out;
}

namespace detail {
inline std::map<Tokens, std::size_t> ngram_counts(const Tokens& s, std::size_t n) {
  std::map<Tokens, std::size_t> c;
  if (s.size() < n) return c;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++c[Tokens(s.begin() + static_cast<std::ptrdiff_t>(i),
                                                             s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return c;
}
}  // namespace detail

/// min(1, |gen| / |ref|) times the clipped j-gram precision of `generated`
/// against the single reference. No smoothing.
inline double bleu_j(const Tokens& generated, const Tokens& reference, int j) {
  if (j < 1 || j > 4) throw std::invalid_argument("bleu_j: j must be in 1..4");
  const Tokens gen = strip_special(generated);
  const Tokens ref = strip_special(reference);
  const auto n = static_cast<std::size_t>(j);
  if (gen.empty() || ref.empty() || gen.size() < n) return 0.0;
  const auto gc = detail::ngram_counts(gen, n);
  const auto rc = detail::ngram_counts(ref, n);
  std::size_t matched = 0;
  for (const auto& [g, c] : gc) {
    auto it = rc.find(g);
    if (it != rc.end()) matched += std::min(c, it->second);
  }
  const double precision = static_cast<double>(matched) / static_cast<double>(gen.size() - n + 1);
  const double brevity = std::min(1.0, static_cast<double>(gen.size()) / static_cast<double>(ref.size()));
  return brevity * precision;
}

/// Mean sentence-level BLEU-j over aligned pairs.
inline double corpus_bleu(const SentenceSet& generated, const SentenceSet& references, int j) {
  if (generated.size() != references.size() || generated.empty())
    throw std::invalid_argument("corpus_bleu: need equally many nonempty generated and reference sentences");
  double s = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) s += bleu_j(generated[i], references[i], j);
  return s / static_cast<double>(generated.size());
}

/// Entropy in nats of the unigram distribution pooled over the set.
inline double entropy(const SentenceSet& set) {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& s : set)
    for (const auto& t : strip_special(s)) {
      ++counts[t];
      ++total;
    }
  if (total == 0) throw std::invalid_argument("entropy: no tokens");
  double h = 0.0;
  for (const auto& [w, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

/// Distinct n-grams divided by the total n-gram count of the set.
inline double distinct_n(const SentenceSet& set, int n) {
  if (n < 1) throw std::invalid_argument("distinct_n: n must be positive");
  std::set<Tokens> seen;
  std::size_t total = 0;
  for (const auto& s : set)
    for (const auto& [g, c] : detail::ngram_counts(strip_special(s), static_cast<std::size_t>(n))) {
      seen.insert(g);
      total += c;
    }
  if (total == 0) throw std::invalid_argument("distinct_n: every sentence is shorter than n");
  return static_cast<double>(seen.size()) / static_cast<double>(total);
}

/// One row of the evaluation table. Diversity columns are absent in MAP mode.
struct MetricsReport {
  std::string model;
  std::string inference;
  double bleu[4] = {0, 0, 0, 0};
  std::optional<double> entropy;
  std::optional<double> distinct_1;
  std::optional<double> distinct_2;
  std::size_t n_inputs = 0;
  std::size_t n_samples = 0;
};

inline const char* metrics_csv_header() {
  return "model,inference,bleu_1,bleu_2,bleu_3,bleu_4,entropy,distinct_1,distinct_2";
}

inline void write_metrics_row(std::ostream& os, const MetricsReport& r) {
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  os << r.model << ',' << r.inference;
  for (double b : r.bleu) os << ',' << b;
  os << ',';
  opt(r.entropy);
  os << ',';
  opt(r.distinct_1);
  os << ',';
  opt(r.distinct_2);
  os << '\n';
}

}  // namespace seqvae
