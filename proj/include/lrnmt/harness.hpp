#pragma once

#include "lrnmt/report.hpp"

namespace lrnmt {

// The experiment harness runs 32-bit models; 64-bit paths exist for the
// verification suites.
using HarnessScalar = float;

// Full run configuration with every default filled in; cmd_train echoes the
// resolved document into the run directory so runs are self-describing.
KvDoc default_run_config();

struct TrainOutcome {
  std::string dir;
  double final_train_loss = 0.0;
  double final_val_ppl = 0.0;
  std::int64_t params = 0;
  double size_reduction_pct = 0.0;
  std::vector<std::string> warnings;
};

// Trains per the config and writes config.txt, metrics.csv, model.ckpt,
// summary.txt, src.vocab, tgt.vocab (and warnings.txt when applicable) into
// out_dir.
TrainOutcome cmd_train(KvDoc config, const std::string& out_dir);

struct EvalOutcome {
  double bleu = 0.0;
  double val_ppl = 0.0;
  std::int64_t sentences = 0;
  bool smoothed = false;
};

// Decodes the run's validation split with beam search, scores corpus BLEU,
// and writes eval.txt plus hyps.txt into the run directory.
EvalOutcome cmd_evaluate(const std::string& run_dir, int beam_width = 4, bool smooth_bleu = false);

struct CompressArgs {
  std::string method;          // prune | svd | svd_then_prune
  double prune_fraction = -1.0;
  std::int64_t rank = 0;                 // 0 = full rank per matrix
  std::string groups = "embed,ff,attn";  // groups to factorize
  // when set, prune_fraction is derived so the pruned model matches the
  // total size reduction of this in-training scheme
  std::string match_groups;
  std::int64_t match_inner = 0;
};

struct CompressOutcome {
  std::string dir;
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  double reported_reduction_pct = 0.0;  // as defined by the method
  double compound_reduction_pct = 0.0;  // vs the uncompressed baseline
  double applied_prune_fraction = -1.0;
};

CompressOutcome cmd_compress(const std::string& run_dir, const CompressArgs& args,
                             const std::string& out_dir);

void cmd_spectrum(const std::string& run_dir, const std::string& out_csv);

std::vector<RunSummary> cmd_report(const std::vector<std::string>& run_dirs,
                                   const std::string& out_dir);

struct SynthArgs {
  std::string task = "reverse";
  std::int64_t vocab_size = 50;
  int min_len = 1;
  int max_len = 10;
  std::int64_t count = 1000;
  std::uint64_t seed = 9999;
};

void cmd_synth_data(const SynthArgs& args, const std::string& out_prefix);

// Weight-pruning fraction that matches the total size reduction of an
// in-training scheme on this config (the equal-size comparisons the
// experiments hold batch sizes constant for).
double derive_matched_prune_fraction(const ModelConfig& cfg, const FactorizationScheme& scheme);

}  // namespace lrnmt
