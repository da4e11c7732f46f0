#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqvae/checkpoint.hpp"
#include "seqvae/config.hpp"
#include "seqvae/grammar.hpp"
#include "seqvae/probes.hpp"
#include "seqvae/seq2seq.hpp"

namespace seqvae {

/// Encoded corpus plus the vocabulary built from its training split.
struct Dataset {
  Corpus corpus;
  Vocabulary vocab;
  std::vector<TokenSequence> train_src, train_tgt, valid_src, valid_tgt, test_src, test_tgt;
  std::vector<Tokens> train_ref, valid_ref, test_ref;  // tokenized targets
};

inline Corpus load_corpus(const ExperimentConfig& cfg) {
  if (!cfg.uses_files())
    return generate_toy_corpus(cfg.grammar, cfg.n_sentences, cfg.corpus_seed, {cfg.valid_fraction, cfg.test_fraction});
  Corpus c;
  c.train = load_examples(cfg.train_file);
  c.valid = load_examples(cfg.valid_file);
  c.test = load_examples(cfg.test_file);
  c.paired = cfg.paired();
  c.provenance = "files:" + cfg.train_file + "," + cfg.valid_file + "," + cfg.test_file;
  if (c.train.empty()) throw std::runtime_error("training file " + cfg.train_file + " has no sentences");
  return c;
}

inline Dataset prepare_data(const ExperimentConfig& cfg, const Vocabulary* fixed_vocab = nullptr) {
  Dataset d;
  d.corpus = load_corpus(cfg);
  std::vector<Tokens> vocab_text;
  for (const auto& e : d.corpus.train) {
    vocab_text.push_back(normalize_and_tokenize(e.source));
    if (d.corpus.paired) vocab_text.push_back(normalize_and_tokenize(e.target));
  }
  d.vocab = fixed_vocab ? *fixed_vocab : build_vocabulary(vocab_text, cfg.vocab_size);
  auto fill = [&](const std::vector<Example>& ex, std::vector<TokenSequence>& src, std::vector<TokenSequence>& tgt,
                  std::vector<Tokens>& ref) {
    for (const auto& e : ex) {
      Tokens s = normalize_and_tokenize(e.source);
      Tokens t = normalize_and_tokenize(e.target);
      if (s.empty() || t.empty()) continue;
      src.push_back(encode(s, d.vocab, cfg.max_len));
      tgt.push_back(encode(t, d.vocab, cfg.max_len));
      // references see the same vocabulary and length limit as the model
      ref.push_back(decode_tokens(tgt.back().indices, d.vocab));
    }
  };
  fill(d.corpus.train, d.train_src, d.train_tgt, d.train_ref);
  fill(d.corpus.valid, d.valid_src, d.valid_tgt, d.valid_ref);
  fill(d.corpus.test, d.test_src, d.test_tgt, d.test_ref);
  if (d.train_src.empty()) throw std::runtime_error("no usable training sentences");
  return d;
}

/// One optimizer step as it appears in the training log.
struct IterRecord {
  long long iteration = 0;
  long long epoch = 0;
  double j_rec = 0.0;
  double kl_z = 0.0;
  double kl_c = 0.0;
  double lambda = 0.0;
  double lambda_times_kl = 0.0;
  double dropout_p = 0.0;
  std::size_t batch = 0;
  std::size_t target_tokens = 0;

  /// KL of z per target token in this batch.
  double kl_per_token() const {
    return kl_z * static_cast<double>(batch) / static_cast<double>(target_tokens);
  }
};

struct EpochRecord {
  long long epoch = 0;
  double valid_j_rec = 0.0;
  double valid_kl_z = 0.0;
  double valid_kl_c = 0.0;
  double valid_loss = 0.0;
};

/// Training-log columns. Deterministic tasks have no KL columns; the
/// variational-attention tasks add kl_c, and their lambda_times_kl is
/// lambda * (kl_z + gamma_a * kl_c).
inline std::string train_log_header(const ExperimentConfig& cfg) {
  const ModelSpec s = cfg.model_spec(special::count + 1);
  if (!s.has_kl()) return "iteration,epoch,J_rec,dropout_p";
  if (s.attention == AttentionMode::Variational) return "iteration,epoch,J_rec,kl_z,kl_c,lambda,lambda_times_kl,dropout_p";
  return "iteration,epoch,J_rec,kl_z,lambda,lambda_times_kl,dropout_p";
}

inline void write_train_row(std::ostream& os, const ExperimentConfig& cfg, const IterRecord& r) {
  const ModelSpec s = cfg.model_spec(special::count + 1);
  os << r.iteration << ',' << r.epoch << ',' << r.j_rec;
  if (s.has_kl()) {
    os << ',' << r.kl_z;
    if (s.attention == AttentionMode::Variational) os << ',' << r.kl_c;
    os << ',' << r.lambda << ',' << r.lambda_times_kl;
  }
  os << ',' << r.dropout_p << '\n';
}

inline const char* valid_log_header() { return "epoch,valid_J_rec,valid_kl_z,valid_kl_c,valid_loss"; }

inline void write_valid_row(std::ostream& os, const EpochRecord& r) {
  os << r.epoch << ',' << r.valid_j_rec << ',' << r.valid_kl_z << ',' << r.valid_kl_c << ',' << r.valid_loss << '\n';
}

/// Runs one experiment. A single Rng drives parameter initialization, then
/// shuffling, word dropout and latent noise, so the whole trajectory is a
/// function of (config, seed). Holds pointers into its own model, hence not
/// copyable or movable.
class Trainer {
public:
  using IterCallback = std::function<void(const IterRecord&)>;
  using EpochCallback = std::function<void(const Trainer&, const EpochRecord&)>;

  explicit Trainer(ExperimentConfig cfg) : Trainer(cfg, prepare_data(cfg)) {}

  Trainer(ExperimentConfig cfg, Dataset data)
      : cfg_(std::move(cfg)), data_(std::move(data)), rng_(cfg_.seed) {
    cfg_.validate();
    model_ = Seq2SeqModel::init(cfg_.model_spec(data_.vocab.size()), rng_);
    params_ = model_.params();
    opt_ = std::make_unique<Optimizer>(cfg_.optimizer_kind(), cfg_.lr, params_);
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const ExperimentConfig& config() const { return cfg_; }
  const Dataset& data() const { return data_; }
  const Seq2SeqModel& model() const { return model_; }
  Seq2SeqModel& model() { return model_; }
  const Rng& rng() const { return rng_; }
  long long iteration() const { return iteration_; }
  long long epoch() const { return epoch_; }
  bool finished() const { return stopped_ || epoch_ >= static_cast<long long>(cfg_.epochs); }
  const std::vector<EpochRecord>& history() const { return history_; }

  void on_iteration(IterCallback cb) { on_iter_ = std::move(cb); }
  void on_epoch(EpochCallback cb) { on_epoch_ = std::move(cb); }

  double current_dropout() const { return cfg_.word_dropout ? dropout_schedule(epoch_) : 0.0; }

  /// One minibatch update. Finishing the last batch of an epoch also runs
  /// validation and the early-stopping check.
  IterRecord step() {
    if (finished()) throw std::logic_error("Trainer::step: training already finished");
    const std::size_t n = data_.train_src.size();
    if (position_ == 0) shuffle();
    const std::size_t end = std::min(n, position_ + cfg_.batch_size);
    std::vector<TokenSequence> src, tgt;
    for (std::size_t k = position_; k < end; ++k) {
      src.push_back(data_.train_src[order_[k]]);
      tgt.push_back(data_.train_tgt[order_[k]]);
    }
    const ModelSpec& spec = model_.spec;
    IterRecord rec;
    rec.iteration = iteration_;
    rec.epoch = epoch_;
    rec.dropout_p = current_dropout();
    rec.batch = src.size();
    rec.lambda = spec.has_kl() ? kl_weight(cfg_.schedule(), iteration_) : 0.0;

    Tape t;
    ModelWeights w = bind(t, model_);
    ForwardResult fr = teacher_forced_loss(w, spec, src, tgt, rec.dropout_p, rng_);
    const double gamma = cfg_.effective_gamma();
    Var loss = total_loss(fr, rec.lambda, gamma);
    zero_grads(params_);
    t.backward(loss);
    opt_->step();

    rec.j_rec = fr.j_rec.item();
    rec.kl_z = fr.kl_z ? fr.kl_z->item() : 0.0;
    rec.kl_c = fr.kl_c ? fr.kl_c->item() : 0.0;
    rec.lambda_times_kl = rec.lambda * (rec.kl_z + gamma * rec.kl_c);
    rec.target_tokens = fr.target_tokens;
    ++iteration_;
    position_ = end;
    if (on_iter_) on_iter_(rec);
    if (position_ >= n) finish_epoch();
    return rec;
  }

  /// Trains until the configured epoch count or early stop.
  void run() {
    while (!finished()) step();
  }

  /// Mean per-sentence losses on a split without dropout or noise.
  EpochRecord evaluate(const std::vector<TokenSequence>& src, const std::vector<TokenSequence>& tgt) const {
    EpochRecord r;
    r.epoch = epoch_;
    if (src.empty()) return r;
    Rng unused(0);
    double jr = 0, kz = 0, kc = 0;
    for (std::size_t s = 0; s < src.size(); s += cfg_.batch_size) {
      const std::size_t e = std::min(src.size(), s + cfg_.batch_size);
      std::vector<TokenSequence> bs(src.begin() + static_cast<std::ptrdiff_t>(s),
                                    src.begin() + static_cast<std::ptrdiff_t>(e));
      std::vector<TokenSequence> bt(tgt.begin() + static_cast<std::ptrdiff_t>(s),
                                    tgt.begin() + static_cast<std::ptrdiff_t>(e));
      Tape t;
      ModelWeights w = bind(t, model_);
      ForwardResult fr = teacher_forced_loss(w, model_.spec, bs, bt, 0.0, unused, false);
      const double b = static_cast<double>(e - s);
      jr += fr.j_rec.item() * b;
      if (fr.kl_z) kz += fr.kl_z->item() * b;
      if (fr.kl_c) kc += fr.kl_c->item() * b;
    }
    const double n = static_cast<double>(src.size());
    r.valid_j_rec = jr / n;
    r.valid_kl_z = kz / n;
    r.valid_kl_c = kc / n;
    r.valid_loss = r.valid_j_rec + r.valid_kl_z + cfg_.effective_gamma() * r.valid_kl_c;
    return r;
  }

  // -- checkpointing --------------------------------------------------------

  void save(const std::string& path) const {
    BinaryWriter w;
    w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.str(cfg_.to_text());
    w.u64(data_.vocab.size());
    for (const auto& tok : data_.vocab.tokens()) w.str(tok);
    const auto params = model_.params();
    w.u64(params.size());
    for (const Parameter* p : params) {
      w.str(p->name);
      w.tensor(p->value);
    }
    w.u8(opt_->kind() == OptimizerKind::Adam ? 0 : 1);
    const AdamState& st = opt_->adam_state();
    w.i64(st.t);
    w.u64(st.m.size());
    for (std::size_t k = 0; k < st.m.size(); ++k) {
      w.tensor(st.m[k]);
      w.tensor(st.v[k]);
    }
    w.i64(iteration_);
    w.i64(epoch_);
    w.u64(position_);
    w.u64(order_.size());
    for (std::size_t o : order_) w.u64(o);
    w.f64(best_valid_);
    w.u64(bad_epochs_);
    w.u8(stopped_ ? 1 : 0);
    w.u64(history_.size());
    for (const auto& h : history_) {
      w.i64(h.epoch);
      w.f64(h.valid_j_rec);
      w.f64(h.valid_kl_z);
      w.f64(h.valid_kl_c);
      w.f64(h.valid_loss);
    }
    w.str(rng_.state());
    w.save(path);
  }

  /// Restores a run exactly where `save` left it. `overrides` may change
  /// the epoch budget or early-stopping settings, nothing that alters the
  /// model or data.
  static std::unique_ptr<Trainer> load(const std::string& path,
                                       const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    BinaryReader r = BinaryReader::from_file(path);
    if (r.raw(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic))
      throw CheckpointError(path + " is not a checkpoint");
    if (const auto v = r.u32(); v != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
    ExperimentConfig cfg = ExperimentConfig::parse(r.str(), path);
    for (const auto& [k, v] : overrides) {
      if (k != "epochs" && k != "early_stopping" && k != "patience")
        throw ConfigError("cannot override '" + k + "' when resuming");
      cfg.set(k, v);
    }
    std::vector<std::string> toks(r.u64());
    for (auto& t : toks) t = r.str();
    Vocabulary vocab = Vocabulary::from_tokens(toks);
    auto tr = std::unique_ptr<Trainer>(new Trainer(cfg, prepare_data(cfg, &vocab)));
    const std::size_t np = r.u64();
    if (np != tr->params_.size()) throw CheckpointError("checkpoint parameter count does not match the model");
    for (Parameter* p : tr->params_) {
      if (r.str() != p->name) throw CheckpointError("checkpoint parameter order mismatch at " + p->name);
      Tensor v = r.tensor();
      if (v.shape() != p->value.shape()) throw CheckpointError("checkpoint shape mismatch for " + p->name);
      p->value = std::move(v);
    }
    const bool adam = r.u8() == 0;
    if (adam != (tr->opt_->kind() == OptimizerKind::Adam)) throw CheckpointError("checkpoint optimizer mismatch");
    AdamState& st = tr->opt_->adam_state();
    st.t = r.i64();
    const std::size_t nm = r.u64();
    if (nm != st.m.size()) throw CheckpointError("checkpoint optimizer state size mismatch");
    for (std::size_t k = 0; k < nm; ++k) {
      st.m[k] = r.tensor();
      st.v[k] = r.tensor();
    }
    tr->iteration_ = r.i64();
    tr->epoch_ = r.i64();
    tr->position_ = r.u64();
    tr->order_.resize(r.u64());
    for (auto& o : tr->order_) o = r.u64();
    tr->best_valid_ = r.f64();
    tr->bad_epochs_ = r.u64();
    tr->stopped_ = r.u8() != 0;
    tr->history_.resize(r.u64());
    for (auto& h : tr->history_) {
      h.epoch = r.i64();
      h.valid_j_rec = r.f64();
      h.valid_kl_z = r.f64();
      h.valid_kl_c = r.f64();
      h.valid_loss = r.f64();
    }
    tr->rng_.set_state(r.str());
    if (!r.done()) throw CheckpointError("trailing data in checkpoint " + path);
    return tr;
  }

private:
  void shuffle() {
    const std::size_t n = data_.train_src.size();
    order_.resize(n);
    for (std::size_t k = 0; k < n; ++k) order_[k] = k;
    for (std::size_t k = n; k > 1; --k) std::swap(order_[k - 1], order_[rng_.below(k)]);
  }

  void finish_epoch() {
    EpochRecord rec = evaluate(data_.valid_src, data_.valid_tgt);
    rec.epoch = epoch_;
    history_.push_back(rec);
    ++epoch_;
    position_ = 0;
    if (cfg_.early_stopping && !data_.valid_src.empty()) {
      if (rec.valid_loss < best_valid_) {
        best_valid_ = rec.valid_loss;
        bad_epochs_ = 0;
      } else if (++bad_epochs_ >= cfg_.patience) {
        stopped_ = true;
      }
    }
    if (on_epoch_) on_epoch_(*this, rec);
  }

  ExperimentConfig cfg_;
  Dataset data_;
  Rng rng_;
  Seq2SeqModel model_;
  ParamList params_;
  std::unique_ptr<Optimizer> opt_;

  long long iteration_ = 0;
  long long epoch_ = 0;
  std::size_t position_ = 0;
  std::vector<std::size_t> order_;
  double best_valid_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
  bool stopped_ = false;
  std::vector<EpochRecord> history_;

  IterCallback on_iter_;
  EpochCallback on_epoch_;
};

}  // namespace seqvae
