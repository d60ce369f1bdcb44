#include <CLI11.hpp>
#include <iostream>

#include "lrnmt/harness.hpp"

using namespace lrnmt;

int main(int argc, char** argv) {
  CLI::App app{"lrnmt: sequence-to-sequence translation with low-rank factorized weights"};
  app.require_subcommand(1);

  // --- train ---
  auto* train = app.add_subcommand("train", "train a model and write a run directory");
  std::string config_path, preset, scheme_mode, groups, task, out_dir = "run";
  std::int64_t seed = -1, steps = -1, inner = 0, vocab_size = -1, train_count = -1, val_count = -1;
  std::int64_t accumulation = -1, mini_min = -1, mini_max = -1;
  train->add_option("--config", config_path, "run config file (key = value lines)");
  train->add_option("--seed", seed, "random seed");
  train->add_option("--preset", preset, "model preset (toy-transformer, toy-lstm, lstm-iwslt, ...)");
  train->add_option("--scheme", scheme_mode, "factorization scheme: none | in_training");
  train->add_option("--groups", groups, "factorized layer groups, e.g. embed,ff,attn");
  train->add_option("--inner-size", inner, "in-training inner size p");
  train->add_option("--steps", steps, "optimizer updates");
  train->add_option("--task", task, "synthetic task: copy | reverse");
  train->add_option("--vocab-size", vocab_size, "synthetic vocabulary size");
  train->add_option("--train-count", train_count, "synthetic training pairs");
  train->add_option("--val-count", val_count, "synthetic validation pairs");
  train->add_option("--accumulation", accumulation, "mini-batches per update");
  train->add_option("--batch-min", mini_min, "min sentences per mini-batch");
  train->add_option("--batch-max", mini_max, "max sentences per mini-batch");
  train->add_option("--out", out_dir, "output run directory");

  // --- compress ---
  auto* compress = app.add_subcommand("compress", "compress a trained checkpoint");
  std::string comp_run, comp_out = "compressed", method = "svd", comp_groups = "embed,ff,attn";
  std::string match_groups;
  double prune_fraction = -1.0;
  std::int64_t rank = 0, match_inner = 0;
  compress->add_option("--run", comp_run, "run directory with model.ckpt")->required();
  compress->add_option("--method", method, "prune | svd | svd_then_prune");
  compress->add_option("--prune-fraction", prune_fraction, "fraction of weights to zero");
  compress->add_option("--rank", rank, "post-training rank (0 = full rank per matrix)");
  compress->add_option("--groups", comp_groups, "layer groups to factorize");
  compress->add_option("--match-groups", match_groups,
                       "derive the prune fraction from this in-training scheme's size reduction");
  compress->add_option("--match-inner-size", match_inner, "inner size for --match-groups");
  compress->add_option("--out", comp_out, "output directory");

  // --- evaluate ---
  auto* evaluate = app.add_subcommand("evaluate", "decode the validation split and score BLEU");
  std::string eval_run;
  int beam = 4;
  bool smooth = false;
  evaluate->add_option("--run", eval_run, "run directory")->required();
  evaluate->add_option("--beam", beam, "beam width");
  evaluate->add_flag("--smooth-bleu", smooth, "add-one smoothed BLEU (flagged in output)");

  // --- report ---
  auto* report = app.add_subcommand("report", "comparison table and perplexity curves");
  std::vector<std::string> report_runs;
  std::string report_out = "report";
  report->add_option("runs", report_runs, "run directories")->required();
  report->add_option("--out", report_out, "output directory");

  // --- spectrum ---
  auto* spectrum = app.add_subcommand("spectrum", "singular-value spectrum CSV for a checkpoint");
  std::string spec_run, spec_out = "spectrum.csv";
  spectrum->add_option("--run", spec_run, "run directory")->required();
  spectrum->add_option("--out", spec_out, "output CSV path");

  // --- synth-data ---
  auto* synth = app.add_subcommand("synth-data", "write a synthetic parallel corpus");
  SynthArgs synth_args;
  std::string synth_out = "synth";
  synth->add_option("--task", synth_args.task, "copy | reverse");
  synth->add_option("--vocab-size", synth_args.vocab_size, "token vocabulary size");
  synth->add_option("--min-len", synth_args.min_len, "minimum sentence length");
  synth->add_option("--max-len", synth_args.max_len, "maximum sentence length");
  synth->add_option("--count", synth_args.count, "sentence pairs");
  synth->add_option("--seed", synth_args.seed, "seed");
  synth->add_option("--out", synth_out, "output prefix (.src/.tgt)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      KvDoc doc;
      if (!config_path.empty()) doc = KvDoc::load(config_path);
      if (seed >= 0) doc.set_int("run.seed", seed);
      if (steps >= 0) doc.set_int("run.steps", steps);
      if (!preset.empty()) doc.set("model.preset", preset);
      if (!scheme_mode.empty()) doc.set("scheme.mode", scheme_mode);
      if (!groups.empty()) {
        std::string canonical;
        for (LayerGroup g : parse_group_list(groups)) {
          if (!canonical.empty()) canonical += ",";
          canonical += layer_group_name(g);
        }
        doc.set("scheme.groups", canonical);
      }
      if (inner > 0) doc.set_int("scheme.inner_size", inner);
      if (!task.empty()) doc.set("data.task", task);
      if (vocab_size > 0) doc.set_int("data.vocab_size", vocab_size);
      if (train_count > 0) doc.set_int("data.train_count", train_count);
      if (val_count > 0) doc.set_int("data.val_count", val_count);
      if (accumulation > 0) doc.set_int("plan.accumulation", accumulation);
      if (mini_min > 0) doc.set_int("plan.min_sentences", mini_min);
      if (mini_max > 0) doc.set_int("plan.max_sentences", mini_max);
      TrainOutcome out = cmd_train(doc, out_dir);
      std::cout << "run " << out.dir << ": params=" << out.params << " (size reduction "
                << out.size_reduction_pct << "%), final train loss=" << out.final_train_loss
                << ", val ppl=" << out.final_val_ppl << "\n";
    } else if (*compress) {
      CompressArgs args;
      args.method = method;
      args.prune_fraction = prune_fraction;
      args.rank = rank;
      args.groups = comp_groups;
      args.match_groups = match_groups;
      args.match_inner = match_inner;
      CompressOutcome out = cmd_compress(comp_run, args, comp_out);
      std::cout << "compressed " << comp_run << " -> " << out.dir << ": params "
                << out.params_before << " -> " << out.params_after << ", total reduction "
                << out.compound_reduction_pct << "%\n";
    } else if (*evaluate) {
      EvalOutcome out = cmd_evaluate(eval_run, beam, smooth);
      std::cout << "BLEU = " << out.bleu << (out.smoothed ? " (smoothed)" : "")
                << ", val ppl = " << out.val_ppl << " over " << out.sentences << " sentences\n";
    } else if (*report) {
      auto runs = cmd_report(report_runs, report_out);
      std::cout << render_table_text(runs);
      std::cout << "wrote " << report_out << "/report.txt, report.csv, curves.svg\n";
    } else if (*spectrum) {
      cmd_spectrum(spec_run, spec_out);
      std::cout << "wrote " << spec_out << "\n";
    } else if (*synth) {
      cmd_synth_data(synth_args, synth_out);
      std::cout << "wrote " << synth_out << ".src/.tgt\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
