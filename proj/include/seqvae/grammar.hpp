#pragma once

#include <cmath>
#include <cstddef>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqvae/rng.hpp"
#include "seqvae/text.hpp"

namespace seqvae {

/// Small templated grammars used as desk-scale corpora.
namespace toy {

struct Slot {
  const std::vector<std::string>* words;
  bool optional = false;
};
using Template = std::vector<Slot>;

inline const std::vector<std::string> kDet = {"the", "a"};
inline const std::vector<std::string> kThe = {"the"};
inline const std::vector<std::string> kAdj = {"big", "small", "red", "old", "young", "happy", "quiet", "tall"};
inline const std::vector<std::string> kSubj = {"man",   "woman",   "dog",    "cat",  "boy",  "girl",
                                               "child", "teacher", "farmer", "doctor", "bird", "horse"};
// Third-person forms; index-aligned with kVerbBase.
inline const std::vector<std::string> kVerb = {"sees",    "likes",  "eats",    "finds", "holds", "watches",
                                               "chases",  "carries", "wants", "needs", "buys",  "paints"};
inline const std::vector<std::string> kVerbBase = {"see",   "like",  "eat",   "find",  "hold", "watch",
                                                   "chase", "carry", "want", "need", "buy",  "paint"};
inline const std::vector<std::string> kObj = {"apple", "ball", "book", "car",  "house",  "hat",
                                              "cake",  "box",  "chair", "fish", "flower", "letter"};
inline const std::vector<std::string> kPrep = {"in", "near", "behind", "under"};
inline const std::vector<std::string> kPlace = {"park", "garden", "kitchen", "street", "school", "river"};
inline const std::vector<std::string> kStop = {"."};
inline const std::vector<std::string> kWhat = {"what"};
inline const std::vector<std::string> kDoes = {"does"};
inline const std::vector<std::string> kWho = {"who"};
inline const std::vector<std::string> kWhere = {"where"};
inline const std::vector<std::string> kIs = {"is"};

inline const std::vector<Template>& statement_templates() {
  static const std::vector<Template> t = {
      {{&kDet}, {&kAdj, true}, {&kSubj}, {&kVerb}, {&kDet}, {&kAdj, true}, {&kObj}, {&kStop}},
      {{&kDet}, {&kSubj}, {&kVerb}, {&kDet}, {&kObj}, {&kPrep}, {&kDet}, {&kPlace}, {&kStop}},
  };
  return t;
}

inline const std::vector<Template>& question_templates() {
  static const std::vector<Template> t = {
      {{&kWhat}, {&kDoes}, {&kThe}, {&kSubj}, {&kVerbBase}},
      {{&kWho}, {&kVerb}, {&kThe}, {&kObj}},
      {{&kWhere}, {&kIs}, {&kThe}, {&kSubj}},
  };
  return t;
}

inline bool in(const std::vector<std::string>& words, const std::string& w) {
  for (const auto& x : words)
    if (x == w) return true;
  return false;
}

inline bool match(const Template& t, std::size_t si, const Tokens& toks, std::size_t ti) {
  if (si == t.size()) return ti == toks.size();
  const Slot& s = t[si];
  if (s.optional && match(t, si + 1, toks, ti)) return true;
  return ti < toks.size() && in(*s.words, toks[ti]) && match(t, si + 1, toks, ti + 1);
}

inline bool matches_any(const std::vector<Template>& ts, const Tokens& toks) {
  for (const auto& t : ts)
    if (match(t, 0, toks, 0)) return true;
  return false;
}

inline std::size_t pick(Rng& rng, const std::vector<std::string>& words) { return rng.below(words.size()); }

struct Statement {
  Tokens tokens;
  std::size_t subj = 0;
  std::size_t verb = 0;
  std::size_t obj = 0;
};

inline Statement draw_statement(Rng& rng) {
  Statement s;
  const bool with_place = rng.bernoulli(0.3);
  auto& out = s.tokens;
  out.push_back(kDet[pick(rng, kDet)]);
  if (!with_place && rng.bernoulli(0.5)) out.push_back(kAdj[pick(rng, kAdj)]);
  s.subj = pick(rng, kSubj);
  out.push_back(kSubj[s.subj]);
  s.verb = pick(rng, kVerb);
  out.push_back(kVerb[s.verb]);
  out.push_back(kDet[pick(rng, kDet)]);
  if (!with_place && rng.bernoulli(0.5)) out.push_back(kAdj[pick(rng, kAdj)]);
  s.obj = pick(rng, kObj);
  out.push_back(kObj[s.obj]);
  if (with_place) {
    out.push_back(kPrep[pick(rng, kPrep)]);
    out.push_back(kDet[pick(rng, kDet)]);
    out.push_back(kPlace[pick(rng, kPlace)]);
  }
  out.push_back(".");
  return s;
}

inline Tokens draw_question(Rng& rng, const Statement& s) {
  switch (rng.below(3)) {
    case 0:
      return {"what", "does", "the", kSubj[s.subj], kVerbBase[s.verb]};
    case 1:
      return {"who", kVerb[s.verb], "the", kObj[s.obj]};
    default:
      return {"where", "is", "the", kSubj[s.subj]};
  }
}

}  // namespace toy

/// Known grammar identifiers: "svo" (single sentences) and "qa"
/// (statement -> question pairs).
inline bool is_known_grammar(const std::string& id) { return id == "svo" || id == "qa"; }

inline std::vector<std::string> grammar_words(const std::string& id) {
  using namespace toy;
  if (!is_known_grammar(id)) throw std::invalid_argument("unknown grammar id '" + id + "'");
  std::set<std::string> words;
  for (auto* list : {&kDet, &kAdj, &kSubj, &kVerb, &kObj, &kPrep, &kPlace, &kStop}) words.insert(list->begin(), list->end());
  if (id == "qa")
    for (auto* list : {&kVerbBase, &kWhat, &kDoes, &kWho, &kWhere, &kIs, &kThe}) words.insert(list->begin(), list->end());
  return {words.begin(), words.end()};
}

/// Grammar membership for generated output. For "qa" this checks the target
/// (question) side.
inline bool grammar_accepts(const std::string& id, const Tokens& toks) {
  if (id == "svo") return toy::matches_any(toy::statement_templates(), toks);
  if (id == "qa") return toy::matches_any(toy::question_templates(), toks);
  throw std::invalid_argument("unknown grammar id '" + id + "'");
}

struct SplitFractions {
  double valid = 0.1;
  double test = 0.1;
};

/// Draws n distinct source sentences from the grammar and splits them into
/// train/valid/test. Deterministic per seed.
inline Corpus generate_toy_corpus(const std::string& grammar_id, std::size_t n, std::uint64_t seed,
                                  SplitFractions split = {}) {
  if (!is_known_grammar(grammar_id)) throw std::invalid_argument("unknown grammar id '" + grammar_id + "'");
  if (n < 1) throw std::invalid_argument("generate_toy_corpus: need at least one sentence");
  Rng rng(seed);
  const bool paired = grammar_id == "qa";
  std::set<std::string> seen;
  std::vector<Example> all;
  std::size_t attempts = 0;
  while (all.size() < n) {
    if (++attempts > 1000 * n) throw std::runtime_error("grammar '" + grammar_id + "' cannot supply enough distinct sentences");
    auto st = toy::draw_statement(rng);
    std::string src = join(st.tokens);
    if (!seen.insert(src).second) continue;
    std::string tgt = paired ? join(toy::draw_question(rng, st)) : src;
    all.push_back({std::move(src), std::move(tgt)});
  }
  const auto n_valid = static_cast<std::size_t>(std::llround(split.valid * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(split.test * static_cast<double>(n)));
  if (n_valid + n_test > n) throw std::invalid_argument("generate_toy_corpus: split fractions exceed corpus size");
  Corpus c;
  c.paired = paired;
  c.provenance = "toy:" + grammar_id + ":n=" + std::to_string(n) + ":seed=" + std::to_string(seed);
  const std::size_t n_train = n - n_valid - n_test;
  c.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  c.valid.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
                 all.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  c.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), all.end());
  return c;
}

}  // namespace seqvae
