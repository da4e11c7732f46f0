#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "seqvae/seqvae.hpp"

namespace fs = std::filesystem;
using namespace seqvae;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "config file (key = value lines)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "random seed (overrides the config)");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--set", o.sets, "override one config key, key=value (repeatable)");
}

std::vector<std::pair<std::string, std::string>> split_sets(const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

/// base defaults, then the config file, then --set, then --seed.
ExperimentConfig build_config(const CommonOptions& o, ExperimentConfig base = {}) {
  ExperimentConfig c = o.config.empty() ? std::move(base) : ExperimentConfig::load(o.config, std::move(base));
  for (const auto& [k, v] : split_sets(o.sets)) c.set(k, v);
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

/// Files written by the current command. Removed again if the command fails.
class Outputs {
public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  fs::path path(const std::string& name) {
    fs::create_directories(dir_);
    fs::path p = dir_ / name;
    files_.push_back(p);
    return p;
  }

  std::ofstream open(const std::string& name) {
    fs::path p = path(name);
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << std::setprecision(10);
    return os;
  }

  void discard() {
    std::error_code ec;
    for (const auto& f : files_) {
      fs::remove(f, ec);
      fs::remove(fs::path(f.string() + ".tmp"), ec);
    }
  }

private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

std::string sentence(const TokenIds& ids, const Vocabulary& v) { return join(to_words(ids, v)); }

TokenSequence encode_text(const std::string& text, const Trainer& tr) {
  Tokens t = normalize_and_tokenize(text);
  if (t.empty()) throw std::invalid_argument("input sentence '" + text + "' has no tokens");
  return encode(t, tr.data().vocab, tr.config().max_len);
}

struct Split {
  const std::vector<TokenSequence>* src;
  const std::vector<Tokens>* ref;
};

Split pick_split(const Trainer& tr, const std::string& name) {
  const Dataset& d = tr.data();
  if (name == "train") return {&d.train_src, &d.train_ref};
  if (name == "valid") return {&d.valid_src, &d.valid_ref};
  if (name == "test") return {&d.test_src, &d.test_ref};
  throw std::invalid_argument("unknown split '" + name + "'");
}

std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// ---------------------------------------------------------------------------

struct TrainArgs {
  CommonOptions common;
  std::string resume;
  bool every_epoch = false;
};

int cmd_train(const TrainArgs& a, Outputs& out) {
  std::unique_ptr<Trainer> tr;
  if (!a.resume.empty()) {
    if (!a.common.config.empty() || a.common.seed)
      throw ConfigError("--resume takes its config and seed from the checkpoint; use --set epochs=N to extend");
    tr = Trainer::load(a.resume, split_sets(a.common.sets));
  } else {
    tr = std::make_unique<Trainer>(build_config(a.common));
  }
  const ExperimentConfig& cfg = tr->config();
  {
    std::ofstream os = out.open("config.txt");
    os << cfg.to_text();
  }
  std::ofstream log = out.open("train_log.csv");
  log << train_log_header(cfg) << '\n';
  std::ofstream valid = out.open("valid_log.csv");
  valid << valid_log_header() << '\n';
  tr->on_iteration([&](const IterRecord& r) { write_train_row(log, cfg, r); });
  tr->on_epoch([&](const Trainer& t, const EpochRecord& e) {
    write_valid_row(valid, e);
    if (a.every_epoch) t.save(out.path("checkpoint_epoch" + std::to_string(e.epoch) + ".bin").string());
  });
  tr->run();
  tr->save(out.path("checkpoint.bin").string());
  std::cout << "trained " << cfg.task << " for " << tr->epoch() << " epochs (" << tr->iteration()
            << " iterations); vocabulary " << tr->data().vocab.size() << '\n';
  return 0;
}

struct EvalArgs {
  CommonOptions common;
  std::string checkpoint;
  std::string mode = "map";
  std::string split = "test";
  std::string name;
  std::size_t k = 10;
  std::string attention_json;
  std::size_t attention_limit = 10;
};

void dump_attention(const Trainer& tr, const Split& s, std::size_t limit, std::ostream& os) {
  const std::size_t n = std::min(limit, s.src->size());
  std::vector<TokenSequence> src(s.src->begin(), s.src->begin() + static_cast<std::ptrdiff_t>(n));
  DecodeOptions opt;
  opt.record = true;
  auto results = greedy_decode(tr.model(), src, opt);
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json ex;
    ex["source"] = join(decode_tokens(src[i].indices, tr.data().vocab));
    ex["output"] = sentence(results[i].tokens, tr.data().vocab);
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& st : results[i].attention) {
      nlohmann::json j;
      j["alpha"] = as_vector(st.weights);
      j["mu_c"] = as_vector(st.mu_c);
      if (!st.sigma_c.empty()) j["sigma_c"] = as_vector(st.sigma_c);
      steps.push_back(std::move(j));
    }
    ex["steps"] = std::move(steps);
    doc.push_back(std::move(ex));
  }
  os << doc.dump(2) << '\n';
}

int cmd_eval(const EvalArgs& a, Outputs& out) {
  auto tr = Trainer::load(a.checkpoint);
  const ModelSpec& spec = tr->model().spec;
  if (a.mode != "map" && a.mode != "sampling") throw std::invalid_argument("--mode must be map or sampling");
  if (a.mode == "sampling" && !spec.stochastic())
    throw std::invalid_argument("task '" + tr->config().task + "' is deterministic; sampling mode needs a variational model");
  Split s = pick_split(*tr, a.split);
  if (s.src->empty()) throw std::invalid_argument("split '" + a.split + "' is empty");
  MetricsReport rep;
  if (a.mode == "map") {
    rep = map_report(tr->model(), *s.src, *s.ref, tr->data().vocab);
  } else {
    Rng rng(a.common.seed.value_or(probe_seed(tr->config().seed)));
    rep = diversity_probe(tr->model(), *s.src, *s.ref, tr->data().vocab, a.k, rng);
  }
  rep.model = a.name.empty() ? tr->config().task : a.name;
  std::ofstream os = out.open("metrics.csv");
  os << metrics_csv_header() << '\n';
  write_metrics_row(os, rep);
  write_metrics_row(std::cout << std::setprecision(6), rep);
  if (!a.attention_json.empty()) {
    if (spec.attention == AttentionMode::None) throw std::invalid_argument("--attention-json needs an attention model");
    std::ofstream js = out.open(a.attention_json);
    dump_attention(*tr, s, a.attention_limit, js);
  }
  return 0;
}

struct SampleArgs {
  CommonOptions common;
  std::string checkpoint;
  std::size_t n = 100;
};

int cmd_sample(const SampleArgs& a, Outputs& out) {
  auto tr = Trainer::load(a.checkpoint);
  Rng rng(a.common.seed.value_or(probe_seed(tr->config().seed)));
  auto samples = random_sample(tr->model(), a.n, rng);
  std::ofstream os = out.open("samples.txt");
  for (const auto& s : samples) os << sentence(s, tr->data().vocab) << '\n';
  return 0;
}

struct InterpolateArgs {
  CommonOptions common;
  std::string checkpoint, a, b;
  std::vector<double> alphas = ProbeConfig{}.alphas;
};

int cmd_interpolate(const InterpolateArgs& a, Outputs& out) {
  auto tr = Trainer::load(a.checkpoint);
  auto path = interpolate(tr->model(), encode_text(a.a, *tr), encode_text(a.b, *tr), a.alphas);
  std::ofstream os = out.open("interpolation.txt");
  for (std::size_t i = 0; i < path.size(); ++i) os << a.alphas[i] << '\t' << sentence(path[i], tr->data().vocab) << '\n';
  return 0;
}

struct NeighborhoodArgs {
  CommonOptions common;
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string split = "test";
  std::size_t n_inputs = 5;
  double scale = 3.0;
  std::size_t k = 10;
};

int cmd_neighborhood(const NeighborhoodArgs& a, Outputs& out) {
  auto tr = Trainer::load(a.checkpoint);
  if (!(a.scale > 0.0)) throw std::invalid_argument("--scale must be positive");
  std::vector<TokenSequence> src;
  for (const auto& s : a.inputs) src.push_back(encode_text(s, *tr));
  if (src.empty()) {
    Split s = pick_split(*tr, a.split);
    const std::size_t n = std::min(a.n_inputs, s.src->size());
    src.assign(s.src->begin(), s.src->begin() + static_cast<std::ptrdiff_t>(n));
  }
  if (src.empty()) throw std::invalid_argument("no input sentences");
  Rng rng(a.common.seed.value_or(probe_seed(tr->config().seed)));
  const auto map = map_reconstruct(tr->model(), src);
  std::vector<std::vector<TokenIds>> draws;
  for (std::size_t d = 0; d < a.k; ++d) draws.push_back(neighborhood_sample(tr->model(), src, a.scale, rng));
  const Vocabulary& v = tr->data().vocab;
  std::ofstream os = out.open("neighborhood.txt");
  for (std::size_t i = 0; i < src.size(); ++i) {
    os << "input\t" << join(decode_tokens(src[i].indices, v)) << '\n';
    os << "map\t" << sentence(map[i], v) << '\n';
    for (const auto& d : draws) os << "sample\t" << sentence(d[i], v) << '\n';
    os << '\n';
  }
  return 0;
}

struct BypassArgs {
  CommonOptions common;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t k = 10;
};

int cmd_bypass(const BypassArgs& a, Outputs& out) {
  ExperimentConfig base;
  base.task = "vae";
  ExperimentConfig cfg = build_config(a.common, base);
  auto runs = bypass_experiment(cfg, a.seeds, a.k);
  std::ofstream os = out.open("bypass.csv");
  os << bypass_csv_header() << '\n';
  for (const auto& r : runs) write_bypass_row(os, r.row);
  std::ofstream curves = out.open("kl_curves.csv");
  curves << "seed,bypass,iteration,epoch,kl_z,lambda,lambda_times_kl\n";
  for (const auto& r : runs)
    for (const auto& p : r.curve)
      curves << r.row.seed << ',' << (r.row.bypass ? "on" : "off") << ',' << p.iteration << ',' << p.epoch << ','
             << p.kl_z << ',' << p.lambda << ',' << p.lambda_times_kl << '\n';
  return 0;
}

struct GammaArgs {
  CommonOptions common;
  std::vector<double> gammas = {0.01, 0.1, 1.0};
  std::size_t k = 10;
};

int cmd_gamma(const GammaArgs& a, Outputs& out) {
  ExperimentConfig base;
  base.task = "ved_vattn_hbar";
  base.grammar = "qa";
  ExperimentConfig cfg = build_config(a.common, base);
  if (cfg.task.rfind("ved_vattn", 0) != 0) throw ConfigError("gamma-sweep trains a variational-attention task");
  for (double g : a.gammas) {
    if (g < 0.0) throw ConfigError("gamma values must be nonnegative");
    ExperimentConfig c = cfg;
    c.gamma_a = g;
    auto curve = learning_curve(c, a.k);
    std::ofstream os = out.open("gamma_" + detail::fmt(g) + ".csv");
    os << curve_csv_header() << '\n';
    for (const auto& p : curve) write_curve_row(os, p);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqvae: sequence-to-sequence variational autoencoders on toy corpora"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train one model variant");
  add_common(c_train, train.common);
  c_train->add_option("--resume", train.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  c_train->add_flag("--save-every-epoch", train.every_epoch, "also write checkpoint_epochN.bin after each epoch");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "MAP or sampling metrics for a checkpoint");
  add_common(c_eval, eval.common);
  c_eval->add_option("--checkpoint", eval.checkpoint)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--mode", eval.mode, "map or sampling")->capture_default_str();
  c_eval->add_option("--split", eval.split, "train, valid or test")->capture_default_str();
  c_eval->add_option("--name", eval.name, "value of the model column (default: task)");
  c_eval->add_option("-k", eval.k, "samples per input in sampling mode")->capture_default_str();
  c_eval->add_option("--attention-json", eval.attention_json, "also write per-step attention of MAP decodes");
  c_eval->add_option("--attention-limit", eval.attention_limit, "inputs in the attention dump")->capture_default_str();

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "decode z drawn from the prior");
  add_common(c_sample, sample.common);
  c_sample->add_option("--checkpoint", sample.checkpoint)->required()->check(CLI::ExistingFile);
  c_sample->add_option("-n", sample.n, "number of samples")->capture_default_str();

  InterpolateArgs interp;
  auto* c_interp = app.add_subcommand("interpolate", "decode along the line between two posterior means");
  add_common(c_interp, interp.common);
  c_interp->add_option("--checkpoint", interp.checkpoint)->required()->check(CLI::ExistingFile);
  c_interp->add_option("--a", interp.a, "sentence A (alpha = 1)")->required();
  c_interp->add_option("--b", interp.b, "sentence B (alpha = 0)")->required();
  c_interp->add_option("--alphas", interp.alphas, "interpolation weights")->delimiter(',');

  NeighborhoodArgs nb;
  auto* c_nb = app.add_subcommand("neighborhood", "decode z = mu + s sigma eps around inputs");
  add_common(c_nb, nb.common);
  c_nb->add_option("--checkpoint", nb.checkpoint)->required()->check(CLI::ExistingFile);
  c_nb->add_option("--input", nb.inputs, "input sentence (repeatable; default: first inputs of --split)");
  c_nb->add_option("--split", nb.split)->capture_default_str();
  c_nb->add_option("--n-inputs", nb.n_inputs)->capture_default_str();
  c_nb->add_option("--scale", nb.scale, "noise scale s")->capture_default_str();
  c_nb->add_option("-k", nb.k, "samples per input")->capture_default_str();

  BypassArgs bp;
  auto* c_bp = app.add_subcommand("bypass-exp", "paired VAE runs with and without the bypass");
  add_common(c_bp, bp.common);
  c_bp->add_option("--seeds", bp.seeds, "seed list")->delimiter(',');
  c_bp->add_option("-k", bp.k, "samples per input")->capture_default_str();

  GammaArgs gm;
  auto* c_gm = app.add_subcommand("gamma-sweep", "learning curves of VED+VAttn for several gamma_a");
  add_common(c_gm, gm.common);
  c_gm->add_option("--gammas", gm.gammas, "gamma_a values")->delimiter(',');
  c_gm->add_option("-k", gm.k, "samples per input")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  auto run = [&](const CommonOptions& common, auto&& fn) {
    Outputs out(common.out);
    try {
      return fn(out);
    } catch (const std::exception& e) {
      out.discard();
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  };
  if (*c_train) return run(train.common, [&](Outputs& o) { return cmd_train(train, o); });
  if (*c_eval) return run(eval.common, [&](Outputs& o) { return cmd_eval(eval, o); });
  if (*c_sample) return run(sample.common, [&](Outputs& o) { return cmd_sample(sample, o); });
  if (*c_interp) return run(interp.common, [&](Outputs& o) { return cmd_interpolate(interp, o); });
  if (*c_nb) return run(nb.common, [&](Outputs& o) { return cmd_neighborhood(nb, o); });
  if (*c_bp) return run(bp.common, [&](Outputs& o) { return cmd_bypass(bp, o); });
  if (*c_gm) return run(gm.common, [&](Outputs& o) { return cmd_gamma(gm, o); });
  return 1;
}
