#include "lrnmt/harness.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "lrnmt/beam.hpp"
#include "lrnmt/bleu.hpp"
#include "lrnmt/compression.hpp"

namespace fs = std::filesystem;

namespace lrnmt {

namespace {

using T = HarnessScalar;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct ResolvedData {
  Corpus train_raw, val_raw;
  Vocab src_vocab, tgt_vocab;
  std::vector<TokenizedPair> train, val;
};

ResolvedData resolve_data(const KvDoc& doc) {
  ResolvedData d;
  std::string source = doc.get_or("data.source", "synthetic");
  if (source == "synthetic") {
    SyntheticKind kind = synthetic_kind_from_name(doc.get_or("data.task", "reverse"));
    std::int64_t vocab = doc.get_int_or("data.vocab_size", 50);
    int min_len = static_cast<int>(doc.get_int_or("data.min_len", 1));
    int max_len = static_cast<int>(doc.get_int_or("data.max_len", 10));
    std::uint64_t seed = static_cast<std::uint64_t>(doc.get_int_or("data.seed", 9999));
    d.train_raw = synthetic_task(kind, vocab, min_len, max_len,
                                 doc.get_int_or("data.train_count", 2000), seed);
    d.val_raw = synthetic_task(kind, vocab, min_len, max_len,
                               doc.get_int_or("data.val_count", 200), seed + 1);
  } else if (source == "files") {
    d.train_raw = load_parallel(doc.get("data.src_file"), doc.get("data.tgt_file"));
    d.val_raw = load_parallel(doc.get("data.val_src_file"), doc.get("data.val_tgt_file"));
  } else {
    throw ConfigError("data.source must be synthetic or files, got " + source);
  }
  std::size_t max_vocab = static_cast<std::size_t>(doc.get_int_or("data.max_vocab", 16384));
  std::vector<std::string> src_lines, tgt_lines;
  for (const auto& [s, t] : d.train_raw) {
    src_lines.push_back(s);
    tgt_lines.push_back(t);
  }
  d.src_vocab = Vocab::build(src_lines, max_vocab);
  d.tgt_vocab = Vocab::build(tgt_lines, max_vocab);
  d.train = encode_corpus(d.train_raw, d.src_vocab, d.tgt_vocab);
  d.val = encode_corpus(d.val_raw, d.src_vocab, d.tgt_vocab);
  return d;
}

ModelConfig resolve_model_config(const KvDoc& doc, const ResolvedData& data) {
  ModelConfig cfg = preset_config(doc.get_or("model.preset", "toy-transformer"));
  cfg.src_vocab = data.src_vocab.size();
  cfg.tgt_vocab = data.tgt_vocab.size();
  if (doc.has("model.layers")) cfg.layers = static_cast<int>(doc.get_int("model.layers"));
  if (doc.has("model.embedding_dim")) cfg.embedding_dim = doc.get_int("model.embedding_dim");
  if (doc.has("model.hidden_dim")) cfg.hidden_dim = doc.get_int("model.hidden_dim");
  if (doc.has("model.ff_dim")) cfg.ff_dim = doc.get_int("model.ff_dim");
  if (doc.has("model.attention_dim")) cfg.attention_dim = doc.get_int("model.attention_dim");
  if (doc.has("model.heads")) cfg.heads = static_cast<int>(doc.get_int("model.heads"));
  if (doc.has("model.tie_embeddings")) cfg.tie_embeddings = doc.get_bool("model.tie_embeddings");
  return cfg;
}

BatchPlan resolve_plan(const KvDoc& doc, std::uint64_t seed) {
  BatchPlan plan;
  plan.min_sentences = static_cast<int>(doc.get_int_or("plan.min_sentences", 32));
  plan.max_sentences = static_cast<int>(doc.get_int_or("plan.max_sentences", 32));
  plan.accumulation = static_cast<int>(doc.get_int_or("plan.accumulation", 1));
  plan.seed = seed;
  return plan;
}

std::string scheme_description(const FactorizationScheme& scheme) {
  if (scheme.mode == SchemeMode::none) return "none (baseline)";
  std::string groups;
  for (LayerGroup g : scheme.groups) {
    if (!groups.empty()) groups += "+";
    groups += layer_group_name(g);
  }
  if (scheme.mode == SchemeMode::in_training)
    return "in-training (" + groups + "), inner size=" + std::to_string(scheme.inner_size);
  std::string ranks;
  for (const auto& [g, r] : scheme.rank_map) {
    if (!ranks.empty()) ranks += "+";
    ranks += std::string(layer_group_name(g)) + "=" + (r == 0 ? "full" : std::to_string(r));
  }
  return "post-training (rank " + ranks + ")";
}

}  // namespace

KvDoc default_run_config() {
  KvDoc doc;
  doc.set_int("run.seed", 1);
  doc.set_int("run.steps", 300);
  doc.set("model.preset", "toy-transformer");
  doc.set("scheme.mode", "none");
  doc.set("scheme.groups", "");
  doc.set_int("scheme.inner_size", 0);
  doc.set("data.source", "synthetic");
  doc.set("data.task", "reverse");
  doc.set_int("data.seed", 9999);
  doc.set_int("data.vocab_size", 50);
  doc.set_int("data.min_len", 1);
  doc.set_int("data.max_len", 10);
  doc.set_int("data.train_count", 2000);
  doc.set_int("data.val_count", 200);
  doc.set_int("data.max_vocab", 16384);
  doc.set_int("plan.min_sentences", 32);
  doc.set_int("plan.max_sentences", 32);
  doc.set_int("plan.accumulation", 1);
  doc.set_int("train.warmup", 400);
  doc.set_double("train.lr_base", 1.0);
  doc.set_double("train.lstm_lr", 0.001);
  doc.set_double("train.clip_norm", 5.0);
  doc.set_int("train.validate_every", 25);
  return doc;
}

TrainOutcome cmd_train(KvDoc config, const std::string& out_dir) {
  // overlay the caller's keys onto the defaults so the echoed config is complete
  KvDoc doc = default_run_config();
  for (const auto& [k, v] : config.entries()) doc.set(k, v);

  FactorizationScheme scheme = FactorizationScheme::from_doc(doc);
  scheme.validate();

  ResolvedData data = resolve_data(doc);
  ModelConfig cfg = resolve_model_config(doc, data);

  fs::create_directories(out_dir);
  std::uint64_t seed = static_cast<std::uint64_t>(doc.get_int("run.seed"));

  auto model = build_model<T>(cfg, scheme, seed);
  for (const auto& w : model->build_warnings()) std::cerr << "warning: " << w << "\n";

  // echo the fully resolved configuration
  cfg.to_doc(doc);
  scheme.to_doc(doc);
  doc.save(out_dir + "/config.txt");
  data.src_vocab.save(out_dir + "/src.vocab");
  data.tgt_vocab.save(out_dir + "/tgt.vocab");
  if (!model->build_warnings().empty()) {
    std::string w;
    for (const auto& line : model->build_warnings()) w += line + "\n";
    write_file(out_dir + "/warnings.txt", w);
  }

  std::vector<Batch> val_batches;
  for (std::size_t i = 0; i < data.val.size(); i += 32) {
    std::vector<TokenizedPair> chunk(data.val.begin() + static_cast<std::ptrdiff_t>(i),
                                     data.val.begin() + static_cast<std::ptrdiff_t>(
                                                            std::min(data.val.size(), i + 32)));
    val_batches.push_back(make_batch(chunk));
  }

  TrainOptions opts;
  opts.steps = doc.get_int("run.steps");
  opts.plan = resolve_plan(doc, seed);
  opts.warmup = doc.get_int("train.warmup");
  opts.lr_base = doc.get_double("train.lr_base");
  opts.lstm_lr = doc.get_double("train.lstm_lr");
  opts.clip_norm = doc.get_double("train.clip_norm");
  opts.validate_every = doc.get_int("train.validate_every");
  opts.metrics_path = out_dir + "/metrics.csv";

  AdamOptions aopts;
  if (cfg.family == ModelFamily::lstm) aopts.beta2 = 0.999;
  Adam<T> optimizer(aopts);
  TrainResult result = train_model(*model, data.train, val_batches, optimizer, opts);

  save_checkpoint(*model, &optimizer, opts.steps, out_dir + "/model.ckpt");

  TrainOutcome out;
  out.dir = out_dir;
  out.final_train_loss = result.final_train_loss;
  out.final_val_ppl = result.final_val_ppl;
  out.params = model->total_param_count();
  out.size_reduction_pct = size_reduction(cfg, scheme);
  out.warnings = model->build_warnings();

  KvDoc summary;
  summary.set("summary.method", scheme_description(scheme));
  summary.set_int("summary.params", out.params);
  summary.set_int("summary.params_baseline", param_count_with_scheme(cfg, FactorizationScheme::none()));
  summary.set_double("summary.size_reduction_pct", out.size_reduction_pct);
  summary.set_double("summary.final_train_loss", out.final_train_loss);
  summary.set_double("summary.final_val_ppl", out.final_val_ppl);
  summary.set_int("summary.steps", opts.steps);
  summary.save(out_dir + "/summary.txt");
  return out;
}

EvalOutcome cmd_evaluate(const std::string& run_dir, int beam_width, bool smooth_bleu) {
  KvDoc doc = KvDoc::load(run_dir + "/config.txt");
  auto loaded = load_checkpoint<T>(run_dir + "/model.ckpt");
  Vocab src_vocab = Vocab::load(run_dir + "/src.vocab");
  Vocab tgt_vocab = Vocab::load(run_dir + "/tgt.vocab");

  ResolvedData data;
  {
    std::string source = doc.get_or("data.source", "synthetic");
    if (source == "synthetic") {
      SyntheticKind kind = synthetic_kind_from_name(doc.get_or("data.task", "reverse"));
      std::uint64_t seed = static_cast<std::uint64_t>(doc.get_int_or("data.seed", 9999));
      data.val_raw = synthetic_task(kind, doc.get_int_or("data.vocab_size", 50),
                                    static_cast<int>(doc.get_int_or("data.min_len", 1)),
                                    static_cast<int>(doc.get_int_or("data.max_len", 10)),
                                    doc.get_int_or("data.val_count", 200), seed + 1);
    } else {
      data.val_raw = load_parallel(doc.get("data.val_src_file"), doc.get("data.val_tgt_file"));
    }
  }
  data.val = encode_corpus(data.val_raw, src_vocab, tgt_vocab);

  int max_len = static_cast<int>(2 * doc.get_int_or("data.max_len", 10) + 2);
  std::vector<std::string> hyps, refs;
  for (std::size_t i = 0; i < data.val.size(); ++i) {
    Hypothesis h = beam_search(*loaded.model, data.val[i].src, beam_width, max_len);
    hyps.push_back(tgt_vocab.decode(h.tokens));
    refs.push_back(data.val_raw[i].second);
  }
  BleuResult bleu = corpus_bleu(hyps, refs, smooth_bleu);

  std::vector<Batch> val_batches;
  for (std::size_t i = 0; i < data.val.size(); i += 32) {
    std::vector<TokenizedPair> chunk(data.val.begin() + static_cast<std::ptrdiff_t>(i),
                                     data.val.begin() + static_cast<std::ptrdiff_t>(
                                                            std::min(data.val.size(), i + 32)));
    val_batches.push_back(make_batch(chunk));
  }
  EvalOutcome out;
  out.bleu = bleu.score;
  out.val_ppl = evaluate_perplexity(*loaded.model, val_batches);
  out.sentences = static_cast<std::int64_t>(hyps.size());
  out.smoothed = bleu.smoothed;

  std::string hyp_text;
  for (const auto& h : hyps) hyp_text += h + "\n";
  write_file(run_dir + "/hyps.txt", hyp_text);
  KvDoc ev;
  ev.set_double("eval.bleu", out.bleu);
  ev.set_bool("eval.bleu_smoothed", out.smoothed);
  ev.set_double("eval.val_ppl", out.val_ppl);
  ev.set_int("eval.beam", beam_width);
  ev.set_int("eval.sentences", out.sentences);
  ev.save(run_dir + "/eval.txt");
  return out;
}

double derive_matched_prune_fraction(const ModelConfig& cfg, const FactorizationScheme& scheme) {
  std::int64_t base = param_count_with_scheme(cfg, FactorizationScheme::none());
  std::int64_t compressed = param_count_with_scheme(cfg, scheme);
  std::int64_t weights = 0;
  for (const ParamSpec& spec : enumerate_params(cfg))
    if (spec.shape.size() == 2) weights += numel(spec.shape);
  double fraction = static_cast<double>(base - compressed) / static_cast<double>(weights);
  if (fraction < 0.0 || fraction > 1.0)
    throw ConfigError("matched prune fraction " + std::to_string(fraction) + " outside [0, 1]");
  return fraction;
}

CompressOutcome cmd_compress(const std::string& run_dir, const CompressArgs& args,
                             const std::string& out_dir) {
  auto loaded = load_checkpoint<T>(run_dir + "/model.ckpt");
  auto& model = *loaded.model;
  fs::create_directories(out_dir);

  std::int64_t base = param_count_with_scheme(model.config(), FactorizationScheme::none());
  CompressOutcome out;
  out.dir = out_dir;
  out.params_before = model.total_param_count();

  double fraction = args.prune_fraction;
  if (!args.match_groups.empty()) {
    FactorizationScheme match =
        FactorizationScheme::in_training(parse_group_list(args.match_groups), args.match_inner);
    fraction = derive_matched_prune_fraction(model.config(), match);
  }

  std::string method_desc;
  if (args.method == "prune") {
    if (fraction < 0.0) throw ConfigError("prune requires --prune-fraction (or a match scheme)");
    prune_model(model, fraction);
    out.applied_prune_fraction = fraction;
    std::int64_t zeros = count_zero_weight_entries(model);
    std::int64_t weights = count_weight_entries(model);
    out.reported_reduction_pct = 100.0 * static_cast<double>(zeros) / static_cast<double>(weights);
    out.params_after = model.total_param_count();
    out.compound_reduction_pct =
        100.0 * (1.0 - static_cast<double>(out.params_after - zeros) / static_cast<double>(base));
    method_desc = "pruned " + std::to_string(fraction);
  } else if (args.method == "svd" || args.method == "svd_then_prune") {
    std::map<LayerGroup, std::int64_t> ranks;
    for (LayerGroup g : parse_group_list(args.groups)) ranks[g] = args.rank;
    post_training_factorize(model, ranks);
    out.params_after = model.total_param_count();
    out.reported_reduction_pct =
        100.0 * (1.0 - static_cast<double>(out.params_after) / static_cast<double>(base));
    out.compound_reduction_pct = out.reported_reduction_pct;
    method_desc = scheme_description(model.scheme());
    if (args.method == "svd_then_prune") {
      if (fraction < 0.0) throw ConfigError("svd_then_prune requires --prune-fraction");
      prune_model(model, fraction);
      out.applied_prune_fraction = fraction;
      std::int64_t zeros = count_zero_weight_entries(model);
      out.compound_reduction_pct =
          100.0 * (1.0 - static_cast<double>(out.params_after - zeros) / static_cast<double>(base));
      method_desc += ", then pruned " + std::to_string(fraction);
    }
  } else {
    throw ConfigError("unknown compression method: " + args.method +
                      " (expected prune, svd, svd_then_prune)");
  }

  save_checkpoint(model, static_cast<Adam<T>*>(nullptr), loaded.step, out_dir + "/model.ckpt");
  // carry the run configuration forward so the compressed run dir stays usable
  for (const char* aux : {"/config.txt", "/src.vocab", "/tgt.vocab"}) {
    if (fs::exists(run_dir + aux)) fs::copy_file(run_dir + aux, out_dir + aux,
                                                 fs::copy_options::overwrite_existing);
  }

  std::ostringstream table;
  table << "Compression method | Size reduction | Params before | Params after\n";
  table << method_desc << " | -" << std::fixed << out.compound_reduction_pct << "% | "
        << out.params_before << " | " << out.params_after << "\n";
  write_file(out_dir + "/report.txt", table.str());

  KvDoc summary;
  summary.set("summary.method", method_desc);
  summary.set_int("summary.params", out.params_after);
  summary.set_int("summary.params_baseline", base);
  summary.set_double("summary.size_reduction_pct", out.compound_reduction_pct);
  if (out.applied_prune_fraction >= 0.0)
    summary.set_double("summary.prune_fraction", out.applied_prune_fraction);
  summary.save(out_dir + "/summary.txt");
  return out;
}

void cmd_spectrum(const std::string& run_dir, const std::string& out_csv) {
  auto loaded = load_checkpoint<T>(run_dir + "/model.ckpt");
  SpectrumReport report = spectrum_report(*loaded.model);
  write_file(out_csv, spectrum_csv(report));
}

std::vector<RunSummary> cmd_report(const std::vector<std::string>& run_dirs,
                                   const std::string& out_dir) {
  if (run_dirs.empty()) throw ContractError("report: needs at least one run directory");
  std::vector<RunSummary> runs;
  for (const auto& dir : run_dirs) {
    RunSummary r;
    r.name = fs::path(dir).filename().string();
    if (r.name.empty()) r.name = dir;
    try {
      KvDoc summary = KvDoc::load(dir + "/summary.txt");
      r.method = summary.get_or("summary.method", "?");
      r.size_reduction = summary.get_double_or("summary.size_reduction_pct", 0.0);
      r.val_ppl = summary.get_double_or("summary.final_val_ppl", std::nan(""));
      if (fs::exists(dir + "/eval.txt")) {
        KvDoc ev = KvDoc::load(dir + "/eval.txt");
        r.bleu = ev.get_double_or("eval.bleu", std::nan(""));
        if (ev.has("eval.val_ppl")) r.val_ppl = ev.get_double("eval.val_ppl");
      }
      if (fs::exists(dir + "/metrics.csv"))
        r.curve = parse_metrics_csv(read_file(dir + "/metrics.csv"));
      else {
        r.warning = "missing metrics.csv";
        std::cerr << "warning: " << dir << ": missing metrics.csv\n";
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.warning = e.what();
      std::cerr << "warning: skipping " << dir << ": " << e.what() << "\n";
    }
    runs.push_back(std::move(r));
  }
  fs::create_directories(out_dir);
  write_file(out_dir + "/report.txt", render_table_text(runs));
  write_file(out_dir + "/report.csv", render_table_csv(runs));
  write_file(out_dir + "/curves.svg", render_curves_svg(runs));
  return runs;
}

void cmd_synth_data(const SynthArgs& args, const std::string& out_prefix) {
  Corpus corpus = synthetic_task(synthetic_kind_from_name(args.task), args.vocab_size,
                                 args.min_len, args.max_len, args.count, args.seed);
  save_parallel(corpus, out_prefix + ".src", out_prefix + ".tgt");
}

}  // namespace lrnmt
