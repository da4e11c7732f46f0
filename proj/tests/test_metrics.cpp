#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seqvae/metrics.hpp"
#include "seqvae/rng.hpp"

using namespace seqvae;

namespace {

Tokens random_sentence(Rng& rng, std::size_t max_len, std::size_t alphabet) {
  Tokens s(1 + rng.below(max_len));
  for (auto& t : s) t = std::string(1, static_cast<char>('a' + rng.below(alphabet)));
  return s;
}

}  // namespace

TEST(Bleu, Examples) {
  EXPECT_EQ(bleu_j({"a", "b", "c"}, {"a", "b", "c"}, 1), 1.0);
  EXPECT_EQ(bleu_j({"a", "b", "c"}, {"a", "b", "c"}, 3), 1.0);
  EXPECT_EQ(bleu_j({"a", "b"}, {"a", "b", "c", "d"}, 1), 0.5);
  EXPECT_EQ(bleu_j({"x", "y"}, {"a", "b"}, 1), 0.0);
  EXPECT_EQ(bleu_j({}, {"a", "b"}, 1), 0.0);
}

TEST(Bleu, ClippingAndOrders) {
  // "the the the" against "the cat": one "the" may match
  EXPECT_DOUBLE_EQ(bleu_j({"the", "the", "the"}, {"the", "cat"}, 1), 1.0 / 3.0);
  // bigrams ab, bc, cd vs ab, bx: 1/3 matched, brevity 1
  EXPECT_DOUBLE_EQ(bleu_j({"a", "b", "c", "d"}, {"a", "b", "x"}, 2), 1.0 / 3.0);
  // no trigram overlap, unsmoothed
  EXPECT_EQ(bleu_j({"a", "b", "c", "d"}, {"a", "b", "x", "d"}, 3), 0.0);
  // too short to have a 4-gram
  EXPECT_EQ(bleu_j({"a", "b", "c"}, {"a", "b", "c"}, 4), 0.0);
  EXPECT_THROW(bleu_j({"a"}, {"a"}, 0), std::invalid_argument);
  EXPECT_THROW(bleu_j({"a"}, {"a"}, 5), std::invalid_argument);
}

TEST(Bleu, SpecialTokensStripped) {
  EXPECT_EQ(bleu_j({"a", "b", "<eos>", "<pad>"}, {"<sos>", "a", "b"}, 2), 1.0);
}

TEST(Bleu, CorpusIsMeanOverPairs) {
  EXPECT_DOUBLE_EQ(corpus_bleu({{"a", "b"}, {"x"}}, {{"a", "b", "c", "d"}, {"x"}}, 1), 0.75);
  EXPECT_THROW(corpus_bleu({{"a"}}, {}, 1), std::invalid_argument);
}

TEST(Bleu, Properties) {
  Rng rng(1);
  for (int i = 0; i < 300; ++i) {
    Tokens g = random_sentence(rng, 8, 6), r = random_sentence(rng, 8, 6);
    for (int j = 1; j <= 4; ++j) {
      const double b = bleu_j(g, r, j);
      EXPECT_GE(b, 0.0);
      EXPECT_LE(b, 1.0);
      if (g.size() >= static_cast<std::size_t>(j)) {
        EXPECT_EQ(bleu_j(g, g, j), 1.0);
      }
    }
    Tokens disjoint;
    for (const auto& t : r) disjoint.push_back(t + "'");
    EXPECT_EQ(bleu_j(disjoint, r, 1), 0.0);
  }
}

TEST(Entropy, Examples) {
  EXPECT_EQ(entropy({{"a", "a"}, {"a"}}), 0.0);
  EXPECT_NEAR(entropy({{"a", "b", "c", "d", "e"}}), std::log(5.0), 1e-15);
  EXPECT_NEAR(entropy({{"a", "a", "b"}, {"a"}}), 0.5623, 1e-4);
  EXPECT_NEAR(entropy({{"a", "a", "b"}, {"a"}}), -(0.75 * std::log(0.75) + 0.25 * std::log(0.25)), 1e-6);
  EXPECT_THROW(entropy({}), std::invalid_argument);
  EXPECT_THROW(entropy({{}, {"<eos>"}}), std::invalid_argument);
}

TEST(Entropy, PermutationInvariantAndBoundedByLogDistinct) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    SentenceSet set;
    for (int k = 0; k < 6; ++k) set.push_back(random_sentence(rng, 6, 8));
    const double h = entropy(set);
    SentenceSet rev(set.rbegin(), set.rend());
    EXPECT_NEAR(entropy(rev), h, 1e-12);
    std::set<std::string> distinct;
    for (const auto& s : set) distinct.insert(s.begin(), s.end());
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(distinct.size())) + 1e-12);
  }
}

TEST(Distinct, Examples) {
  SentenceSet copies(10, Tokens{"w", "x", "y", "z"});
  EXPECT_DOUBLE_EQ(distinct_n(copies, 1), 0.1);
  EXPECT_EQ(distinct_n({{"a", "b"}, {"c", "d"}}, 1), 1.0);
  EXPECT_EQ(distinct_n({{"a", "b"}, {"c", "d"}}, 2), 1.0);
  EXPECT_EQ(distinct_n({{"a", "b"}, {"a", "c"}}, 1), 0.75);
  EXPECT_EQ(distinct_n({{"a", "b"}, {"a", "c"}}, 2), 1.0);
  EXPECT_THROW(distinct_n({{"a"}, {"b"}}, 2), std::invalid_argument);
  EXPECT_THROW(distinct_n({{"a"}}, 0), std::invalid_argument);
}

TEST(Distinct, AtMostOneWithEqualityIffUnique) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    SentenceSet set;
    for (int k = 0; k < 3; ++k) set.push_back(random_sentence(rng, 4, 10));
    for (int n = 1; n <= 2; ++n) {
      std::vector<Tokens> all;
      for (const auto& s : set)
        for (std::size_t p = 0; p + n <= s.size(); ++p) all.emplace_back(s.begin() + p, s.begin() + p + n);
      if (all.empty()) continue;
      std::sort(all.begin(), all.end());
      const bool unique = std::adjacent_find(all.begin(), all.end()) == all.end();
      const double d = distinct_n(set, n);
      EXPECT_LE(d, 1.0);
      EXPECT_EQ(d == 1.0, unique);
    }
  }
}

TEST(MetricsCsv, HeaderAndRow) {
  EXPECT_STREQ(metrics_csv_header(), "model,inference,bleu_1,bleu_2,bleu_3,bleu_4,entropy,distinct_1,distinct_2");
  MetricsReport r;
  r.model = "vae";
  r.inference = "map";
  r.bleu[0] = 0.5;
  std::ostringstream os;
  write_metrics_row(os, r);
  EXPECT_EQ(os.str(), "vae,map,0.5,0,0,0,,,\n");
  r.entropy = 1.25;
  r.distinct_1 = 0.75;
  r.distinct_2 = 1;
  std::ostringstream os2;
  write_metrics_row(os2, r);
  EXPECT_EQ(os2.str(), "vae,map,0.5,0,0,0,1.25,0.75,1\n");
}
