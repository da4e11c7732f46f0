#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqvae/grammar.hpp"
#include "seqvae/optim.hpp"
#include "seqvae/seq2seq.hpp"
#include "seqvae/variational.hpp"

namespace seqvae {

class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline const std::vector<std::string>& known_tasks() {
  static const std::vector<std::string> t = {"vae", "dae", "ved_dattn", "ved_vattn_0", "ved_vattn_hbar", "ded",
                                             "ded_dattn"};
  return t;
}

/// Whether the task learns from (source, target) pairs rather than
/// reconstructing its input.
inline bool task_is_paired(const std::string& task) { return task != "vae" && task != "dae"; }

/// Experiment description. Every key has a default; a config file only
/// lists what it changes.
struct ExperimentConfig {
  std::string task = "vae";

  // corpus: either a toy grammar or explicit files
  std::string grammar = "svo";
  std::size_t n_sentences = 1000;
  std::uint64_t corpus_seed = 7;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::string train_file, valid_file, test_file;

  std::size_t vocab_size = 200;
  std::size_t max_len = 10;
  std::size_t emb_dim = 32;
  std::size_t hidden_dim = 100;
  std::size_t latent_dim = 16;
  std::string attention_style = "multiplicative";

  std::string optimizer = "adam";
  double lr = 0.001;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;

  std::string anneal = "tanh";
  double lambda_const = 1.0;
  std::optional<long long> anneal_until;  // default per schedule kind
  std::optional<double> gamma_a;          // default 0.1, variational attention only
  bool word_dropout = false;
  std::optional<bool> bypass;             // default per task

  std::uint64_t seed = 1;
  bool early_stopping = false;
  std::size_t patience = 3;

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k = {
        "task",        "grammar",     "n_sentences",  "corpus_seed",  "valid_fraction", "test_fraction",
        "train_file",  "valid_file",  "test_file",    "vocab_size",   "max_len",        "emb_dim",
        "hidden_dim",  "latent_dim",  "attention_style", "optimizer", "lr",             "batch_size",
        "epochs",      "anneal",      "lambda_const", "anneal_until", "gamma_a",        "word_dropout",
        "bypass",      "seed",        "early_stopping", "patience"};
    return k;
  }

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Canonical text form: every key in fixed order, unset optionals omitted.
  std::string to_text() const {
    std::ostringstream os;
    for (const auto& k : keys()) {
      std::string v = get(k);
      if (!v.empty()) os << k << " = " << v << '\n';
    }
    return os.str();
  }

  /// Applies the `key = value` lines of `text` on top of `base`.
  static ExperimentConfig parse(const std::string& text, const std::string& origin = "config") {
    return parse(text, origin, ExperimentConfig());
  }

  static ExperimentConfig parse(const std::string& text, const std::string& origin, ExperimentConfig base) {
    ExperimentConfig c = std::move(base);
    std::istringstream is(text);
    std::size_t lineno = 0;
    for (std::string line; std::getline(is, line);) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      try {
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return c;
  }

  static ExperimentConfig load(const std::string& path) { return load(path, ExperimentConfig()); }

  static ExperimentConfig load(const std::string& path, ExperimentConfig base) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path, std::move(base));
  }

  bool paired() const { return task_is_paired(task); }
  bool uses_files() const { return !train_file.empty(); }

  bool effective_bypass() const {
    if (bypass) return *bypass;
    return task == "dae" || task == "ded" || task == "ded_dattn";
  }
  double effective_gamma() const { return gamma_a.value_or(0.1); }

  AnnealSchedule schedule() const {
    AnnealKind k = parse_anneal_kind(anneal);
    if (k == AnnealKind::Constant) return AnnealSchedule::constant(lambda_const);
    return {k, lambda_const, anneal_until.value_or(AnnealSchedule::default_freeze(k))};
  }

  OptimizerKind optimizer_kind() const {
    if (optimizer == "adam") return OptimizerKind::Adam;
    if (optimizer == "sgd") return OptimizerKind::Sgd;
    throw ConfigError("unknown optimizer '" + optimizer + "'");
  }

  ModelSpec model_spec(std::size_t vocab) const {
    ModelSpec s;
    s.vocab_size = vocab;
    s.emb_dim = emb_dim;
    s.hidden_dim = hidden_dim;
    s.latent_dim = latent_dim;
    s.max_len = max_len;
    s.bypass = effective_bypass();
    s.style = parse_attention_style(attention_style);
    if (task == "vae") {
      s.latent = LatentMode::Gaussian;
    } else if (task == "dae") {
      s.latent = LatentMode::Deterministic;
    } else if (task == "ded" || task == "ded_dattn") {
      s.latent = LatentMode::None;
      s.attention = task == "ded" ? AttentionMode::None : AttentionMode::Deterministic;
    } else {
      s.latent = LatentMode::Gaussian;
      s.attention = task == "ved_dattn" ? AttentionMode::Deterministic : AttentionMode::Variational;
      s.prior = task == "ved_vattn_0" ? AttnPriorKind::StandardNormal : AttnPriorKind::MeanSource;
    }
    return s;
  }

  /// Rejects invalid values and meaningless flag combinations.
  void validate() const {
    if (std::find(known_tasks().begin(), known_tasks().end(), task) == known_tasks().end())
      throw ConfigError("unknown task '" + task + "'");
    if (!uses_files() && !is_known_grammar(grammar)) throw ConfigError("unknown grammar '" + grammar + "'");
    if (!uses_files()) {
      if (paired() && grammar != "qa") throw ConfigError("task '" + task + "' needs the paired grammar 'qa'");
      if (!paired() && grammar == "qa") throw ConfigError("task '" + task + "' reconstructs single sentences; use 'svo'");
      if (n_sentences < 3) throw ConfigError("n_sentences must be at least 3");
    } else if (valid_file.empty() || test_file.empty()) {
      throw ConfigError("train_file requires valid_file and test_file");
    }
    if (vocab_size < 5) throw ConfigError("vocab_size must be at least 5");
    if (max_len < 2) throw ConfigError("max_len must be at least 2");
    if (emb_dim == 0 || hidden_dim == 0 || latent_dim == 0) throw ConfigError("dimensions must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    (void)optimizer_kind();
    (void)parse_attention_style(attention_style);
    AnnealKind k = parse_anneal_kind(anneal);
    if (k == AnnealKind::Constant && !(lambda_const >= 0.0 && lambda_const <= 1.0))
      throw ConfigError("lambda_const must lie in [0, 1]");
    if (anneal_until && *anneal_until < 0) throw ConfigError("anneal_until must be nonnegative");
    if (gamma_a && task.rfind("ved_vattn", 0) != 0)
      throw ConfigError("gamma_a only applies to the variational-attention tasks");
    if (gamma_a && *gamma_a < 0.0) throw ConfigError("gamma_a must be nonnegative");
    if (bypass && !*bypass && (task == "dae" || task == "ded" || task == "ded_dattn"))
      throw ConfigError("task '" + task + "' is deterministic and always uses the bypass");
    if (word_dropout && (task == "ded" || task == "ded_dattn"))
      throw ConfigError("word dropout applies to latent-variable tasks only");
    if (early_stopping && patience == 0) throw ConfigError("patience must be positive");
    if (valid_fraction < 0.0 || test_fraction < 0.0 || valid_fraction + test_fraction >= 1.0)
      throw ConfigError("valid_fraction + test_fraction must lie in [0, 1)");
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("bad value '" + v + "' for key '" + key + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + v + "' for key '" + key + "'");
}

inline std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& v) {
  using detail::parse_bool;
  using detail::parse_number;
  if (key == "task") task = v;
  else if (key == "grammar") grammar = v;
  else if (key == "n_sentences") n_sentences = parse_number<std::size_t>(key, v);
  else if (key == "corpus_seed") corpus_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "valid_fraction") valid_fraction = parse_number<double>(key, v);
  else if (key == "test_fraction") test_fraction = parse_number<double>(key, v);
  else if (key == "train_file") train_file = v;
  else if (key == "valid_file") valid_file = v;
  else if (key == "test_file") test_file = v;
  else if (key == "vocab_size") vocab_size = parse_number<std::size_t>(key, v);
  else if (key == "max_len") max_len = parse_number<std::size_t>(key, v);
  else if (key == "emb_dim") emb_dim = parse_number<std::size_t>(key, v);
  else if (key == "hidden_dim") hidden_dim = parse_number<std::size_t>(key, v);
  else if (key == "latent_dim") latent_dim = parse_number<std::size_t>(key, v);
  else if (key == "attention_style") attention_style = v;
  else if (key == "optimizer") optimizer = v;
  else if (key == "lr") lr = parse_number<double>(key, v);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, v);
  else if (key == "epochs") epochs = parse_number<std::size_t>(key, v);
  else if (key == "anneal") anneal = v;
  else if (key == "lambda_const") lambda_const = parse_number<double>(key, v);
  else if (key == "anneal_until") anneal_until = parse_number<long long>(key, v);
  else if (key == "gamma_a") gamma_a = parse_number<double>(key, v);
  else if (key == "word_dropout") word_dropout = parse_bool(key, v);
  else if (key == "bypass") bypass = parse_bool(key, v);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
  else if (key == "early_stopping") early_stopping = parse_bool(key, v);
  else if (key == "patience") patience = parse_number<std::size_t>(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline std::string ExperimentConfig::get(const std::string& key) const {
  using detail::fmt;
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  if (key == "task") return task;
  if (key == "grammar") return grammar;
  if (key == "n_sentences") return std::to_string(n_sentences);
  if (key == "corpus_seed") return std::to_string(corpus_seed);
  if (key == "valid_fraction") return fmt(valid_fraction);
  if (key == "test_fraction") return fmt(test_fraction);
  if (key == "train_file") return train_file;
  if (key == "valid_file") return valid_file;
  if (key == "test_file") return test_file;
  if (key == "vocab_size") return std::to_string(vocab_size);
  if (key == "max_len") return std::to_string(max_len);
  if (key == "emb_dim") return std::to_string(emb_dim);
  if (key == "hidden_dim") return std::to_string(hidden_dim);
  if (key == "latent_dim") return std::to_string(latent_dim);
  if (key == "attention_style") return attention_style;
  if (key == "optimizer") return optimizer;
  if (key == "lr") return fmt(lr);
  if (key == "batch_size") return std::to_string(batch_size);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "anneal") return anneal;
  if (key == "lambda_const") return fmt(lambda_const);
  if (key == "anneal_until") return anneal_until ? std::to_string(*anneal_until) : "";
  if (key == "gamma_a") return gamma_a ? fmt(*gamma_a) : "";
  if (key == "word_dropout") return b(word_dropout);
  if (key == "bypass") return bypass ? b(*bypass) : "";
  if (key == "seed") return std::to_string(seed);
  if (key == "early_stopping") return b(early_stopping);
  if (key == "patience") return std::to_string(patience);
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace seqvae
