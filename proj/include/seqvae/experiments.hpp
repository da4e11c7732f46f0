#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqvae/probes.hpp"
#include "seqvae/trainer.hpp"

namespace seqvae {

/// Seed for the probe stream of a run, kept apart from the training stream.
inline std::uint64_t probe_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

/// Neighborhood-sampling report on the test split (validation split when the
/// test split is empty).
inline MetricsReport sampling_report(const Trainer& tr, std::size_t k, Rng& rng) {
  const Dataset& d = tr.data();
  const bool use_test = !d.test_src.empty();
  return diversity_probe(tr.model(), use_test ? d.test_src : d.valid_src, use_test ? d.test_ref : d.valid_ref,
                         d.vocab, k, rng);
}

inline MetricsReport map_eval_report(const Trainer& tr) {
  const Dataset& d = tr.data();
  const bool use_test = !d.test_src.empty();
  return map_report(tr.model(), use_test ? d.test_src : d.valid_src, use_test ? d.test_ref : d.valid_ref, d.vocab);
}

struct BypassRow {
  std::uint64_t seed = 0;
  bool bypass = false;
  double entropy = 0.0;
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
  double final_kl = 0.0;  // mean kl_z over the last epoch's iterations
};

struct BypassRun {
  BypassRow row;
  std::vector<IterRecord> curve;
};

/// Trains the two members of one seed pair (bypass on and off, otherwise
/// identical) and probes both.
inline std::vector<BypassRun> bypass_pair(ExperimentConfig base, std::uint64_t seed, std::size_t k) {
  if (base.task != "vae") throw ConfigError("the bypass experiment trains the 'vae' task");
  std::vector<BypassRun> out;
  for (bool bypass : {true, false}) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    cfg.bypass = bypass;
    Trainer tr(cfg);
    BypassRun run;
    tr.on_iteration([&](const IterRecord& r) { run.curve.push_back(r); });
    tr.run();
    Rng probe(probe_seed(seed));
    MetricsReport rep = sampling_report(tr, k, probe);
    run.row.seed = seed;
    run.row.bypass = bypass;
    run.row.entropy = rep.entropy.value_or(0.0);
    run.row.distinct_1 = rep.distinct_1.value_or(0.0);
    run.row.distinct_2 = rep.distinct_2.value_or(0.0);
    double kl = 0.0;
    std::size_t cnt = 0;
    for (const auto& r : run.curve)
      if (r.epoch == tr.epoch() - 1) {
        kl += r.kl_z;
        ++cnt;
      }
    run.row.final_kl = cnt ? kl / static_cast<double>(cnt) : 0.0;
    out.push_back(std::move(run));
  }
  return out;
}

inline std::vector<BypassRun> bypass_experiment(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds,
                                                std::size_t k) {
  if (seeds.size() < 3) throw std::invalid_argument("bypass_experiment: need at least 3 seeds");
  std::vector<BypassRun> runs;
  for (auto s : seeds)
    for (auto& r : bypass_pair(base, s, k)) runs.push_back(std::move(r));
  return runs;
}

inline const char* bypass_csv_header() { return "seed,bypass,entropy,distinct_1,distinct_2,final_kl"; }

inline void write_bypass_row(std::ostream& os, const BypassRow& r) {
  os << r.seed << ',' << (r.bypass ? "on" : "off") << ',' << r.entropy << ',' << r.distinct_1 << ','
     << r.distinct_2 << ',' << r.final_kl << '\n';
}

struct CurvePoint {
  long long epoch = 0;
  double bleu_2 = 0.0;
  double bleu_4 = 0.0;
  double entropy = 0.0;
  double distinct_1 = 0.0;
};

inline const char* curve_csv_header() { return "epoch,bleu_2,bleu_4,entropy,distinct_1"; }

inline void write_curve_row(std::ostream& os, const CurvePoint& p) {
  os << p.epoch << ',' << p.bleu_2 << ',' << p.bleu_4 << ',' << p.entropy << ',' << p.distinct_1 << '\n';
}

/// Trains one model and records sampling-mode metrics after every epoch.
inline std::vector<CurvePoint> learning_curve(const ExperimentConfig& cfg, std::size_t k) {
  Trainer tr(cfg);
  std::vector<CurvePoint> pts;
  tr.on_epoch([&](const Trainer& t, const EpochRecord& e) {
    Rng probe(probe_seed(cfg.seed) + static_cast<std::uint64_t>(e.epoch));
    MetricsReport rep = sampling_report(t, k, probe);
    pts.push_back({e.epoch, rep.bleu[1], rep.bleu[3], rep.entropy.value_or(0.0), rep.distinct_1.value_or(0.0)});
  });
  tr.run();
  return pts;
}

}  // namespace seqvae
