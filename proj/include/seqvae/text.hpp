#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace seqvae {

using Tokens = std::vector<std::string>;

/// Lowercases, drops punctuation other than ',' and '.', and splits on
/// whitespace. ',' and '.' become standalone tokens.
inline Tokens normalize_and_tokenize(std::string_view raw) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : raw) {
    const auto u = static_cast<unsigned char>(ch);
    if (ch == ',' || ch == '.') {
      flush();
      out.emplace_back(1, ch);
    } else if (u < 0x80 && std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      continue;
    } else {
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    }
  }
  flush();
  return out;
}

inline std::string join(const Tokens& toks, std::string_view sep = " ") {
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s += sep;
    s += toks[i];
  }
  return s;
}

namespace special {
inline constexpr std::size_t pad = 0;
inline constexpr std::size_t sos = 1;
inline constexpr std::size_t eos = 2;
inline constexpr std::size_t unk = 3;
inline constexpr std::size_t count = 4;
inline constexpr std::string_view names[count] = {"<pad>", "<sos>", "<eos>", "<unk>"};
}  // namespace special

/// Frequency-ranked token <-> index map. Indices 0..3 are PAD, SOS, EOS, UNK.
class Vocabulary {
public:
  Vocabulary() {
    for (auto n : special::names) add(std::string(n));
  }

  /// Reserved tokens plus the |V|-4 most frequent corpus tokens; ties go to
  /// the token seen first.
  static Vocabulary build(const std::vector<Tokens>& corpus, std::size_t limit) {
    if (limit <= special::count) throw std::invalid_argument("build_vocabulary: size limit must be at least 5");
    struct Entry {
      std::size_t count = 0;
      std::size_t first = 0;
    };
    std::unordered_map<std::string, Entry> stats;
    std::vector<std::string> order;
    for (const auto& sent : corpus)
      for (const auto& tok : sent) {
        auto [it, fresh] = stats.try_emplace(tok, Entry{0, order.size()});
        if (fresh) order.push_back(tok);
        ++it->second.count;
      }
    if (order.empty()) throw std::invalid_argument("build_vocabulary: empty corpus");
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
      return stats[a].count > stats[b].count;
    });
    Vocabulary v;
    for (const auto& tok : order) {
      if (v.size() >= limit) break;
      if (!v.contains(tok)) v.add(tok);
    }
    return v;
  }

  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < special::count) throw std::invalid_argument("vocabulary: missing reserved tokens");
    for (std::size_t i = 0; i < special::count; ++i)
      if (tokens[i] != special::names[i]) throw std::invalid_argument("vocabulary: reserved token mismatch at " + std::to_string(i));
    Vocabulary v;
    for (std::size_t i = special::count; i < tokens.size(); ++i) {
      if (v.contains(tokens[i])) throw std::invalid_argument("vocabulary: duplicate token '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
    return v;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(const std::string& tok) const { return index_.count(tok) != 0; }

  std::size_t index(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? special::unk : it->second;
  }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write vocabulary to " + path);
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read vocabulary from " + path);
    std::vector<std::string> toks;
    for (std::string line; std::getline(is, line);) toks.push_back(line);
    return from_tokens(toks);
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
  void add(std::string tok) {
    index_.emplace(tok, tokens_.size());
    tokens_.push_back(std::move(tok));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline Vocabulary build_vocabulary(const std::vector<Tokens>& corpus, std::size_t limit) {
  return Vocabulary::build(corpus, limit);
}

/// Fixed-length encoded sentence. `true_length` counts the real tokens plus
/// EOS when one was appended.
struct TokenSequence {
  std::vector<std::size_t> indices;
  std::size_t true_length = 0;

  bool has_eos() const { return true_length > 0 && indices[true_length - 1] == special::eos; }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Maps tokens to indices, then appends EOS and pads to m, or truncates to
/// m tokens (dropping EOS) when the sentence does not fit.
inline TokenSequence encode(const Tokens& tokens, const Vocabulary& vocab, std::size_t m) {
  if (m < 2) throw std::invalid_argument("encode: maximum length must be at least 2");
  TokenSequence seq;
  seq.indices.reserve(m);
  for (const auto& t : tokens) {
    if (seq.indices.size() == m) break;
    seq.indices.push_back(vocab.index(t));
  }
  if (seq.indices.size() < m) seq.indices.push_back(special::eos);
  seq.true_length = seq.indices.size();
  seq.indices.resize(m, special::pad);
  return seq;
}

/// Real tokens up to the first EOS; PAD and SOS are skipped.
inline Tokens decode_tokens(const std::vector<std::size_t>& indices, const Vocabulary& vocab) {
  Tokens out;
  for (std::size_t i : indices) {
    if (i == special::eos) break;
    if (i == special::pad || i == special::sos) continue;
    out.push_back(vocab.token(i));
  }
  return out;
}

inline std::string decode(const TokenSequence& seq, const Vocabulary& vocab) {
  return join(decode_tokens(seq.indices, vocab));
}

/// Source/target pair; the two sides are equal for autoencoding tasks.
struct Example {
  std::string source;
  std::string target;
  friend bool operator==(const Example&, const Example&) = default;
};

struct Corpus {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
  bool paired = false;
  std::string provenance;
};

/// One sentence per line, or "source<TAB>target" per line for paired data.
inline std::vector<Example> load_examples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read corpus file " + path);
  std::vector<Example> out;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      out.push_back({line, line});
    else
      out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

inline void save_examples(const std::string& path, const std::vector<Example>& ex, bool paired) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write corpus file " + path);
  for (const auto& e : ex) {
    os << e.source;
    if (paired) os << '\t' << e.target;
    os << '\n';
  }
}

}  // namespace seqvae
