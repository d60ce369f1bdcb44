#pragma once

#include <chrono>
#include <fstream>

#include "lrnmt/checkpoint.hpp"

namespace lrnmt {

// One optimizer update from an accumulation group: per-batch gradients are
// weighted by each batch's share of the group's target tokens, so the update
// equals one step on the loss-mass-weighted mean over the whole group.
// Returns that mean loss. The schedule advances once per call, not per
// mini-batch.
template <typename T>
double train_step(SeqModel<T>& model, std::span<const Batch> group, Adam<T>& optimizer, double lr,
                  double clip_norm = 0.0) {
  if (group.empty()) throw ContractError("train_step: empty accumulation group");
  auto params = model.params();
  optimizer.zero_grad(params);
  std::int64_t group_tokens = 0;
  for (const Batch& b : group) group_tokens += b.token_count();
  double total = 0.0;
  for (const Batch& b : group) {
    Tape<T> tape;
    model.watch_params(tape);
    LossInfo<T> li = model.forward_loss(tape, b);
    total += static_cast<double>(li.mean_loss(0)) * static_cast<double>(li.tokens);
    Tensor<T> contribution = scale(
        tape, li.mean_loss, static_cast<T>(static_cast<double>(li.tokens) / static_cast<double>(group_tokens)));
    tape.backward(contribution);
  }
  if (clip_norm > 0.0) clip_global_norm(params, clip_norm);
  optimizer.step(params, lr);
  return total / static_cast<double>(group_tokens);
}

struct TrainOptions {
  std::int64_t steps = 300;     // optimizer updates
  BatchPlan plan;
  std::int64_t warmup = 400;    // schedule warmup (transformer)
  double lr_base = 1.0;         // schedule scale (transformer) or constant rate (lstm)
  double lstm_lr = 1e-3;
  double clip_norm = 5.0;       // applied to lstm only
  std::int64_t validate_every = 25;
  double plateau_decay = 0.5;   // lstm: rate multiplier when validation stalls
  int plateau_patience = 3;
  std::string metrics_path;     // empty: no CSV
};

struct MetricsRow {
  std::int64_t step = 0;
  double wall_time = 0.0;
  double train_loss = 0.0;
  double val_ppl = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  double final_train_loss = 0.0;
  double final_val_ppl = 0.0;
  std::vector<MetricsRow> metrics;
};

// Budgeted training loop over epochs of accumulation groups. Deterministic
// for a fixed seed: batching, initialization, and updates share no hidden
// state. A non-finite loss aborts with the step number.
template <typename T>
TrainResult train_model(SeqModel<T>& model, const std::vector<TokenizedPair>& train_corpus,
                        const std::vector<Batch>& val_batches, Adam<T>& optimizer,
                        const TrainOptions& opts) {
  bool is_lstm = model.config().family == ModelFamily::lstm;
  std::ofstream metrics_out;
  if (!opts.metrics_path.empty()) {
    metrics_out.open(opts.metrics_path);
    if (!metrics_out) throw IoError("cannot write metrics file: " + opts.metrics_path);
    metrics_out << "step,wall_time_s,train_loss,val_ppl,lr\n";
  }

  TrainResult result;
  auto t0 = std::chrono::steady_clock::now();
  double lstm_rate = opts.lstm_lr;
  double best_val = std::numeric_limits<double>::infinity();
  int stalls = 0;
  std::int64_t step = 0;
  double last_loss = 0.0;

  auto validate_and_log = [&](double train_loss) {
    double ppl = val_batches.empty() ? 0.0 : evaluate_perplexity(model, val_batches);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double lr = is_lstm ? lstm_rate
                        : warmup_inv_sqrt_lr(std::max<std::int64_t>(step, 1),
                                             model.config().embedding_dim, opts.warmup, opts.lr_base);
    result.metrics.push_back({step, wall, train_loss, ppl, lr});
    if (metrics_out)
      metrics_out << step << "," << wall << "," << train_loss << "," << ppl << "," << lr << "\n"
                  << std::flush;
    if (!val_batches.empty() && is_lstm) {
      if (ppl < best_val * 0.999) {
        best_val = ppl;
        stalls = 0;
      } else if (++stalls >= opts.plateau_patience) {
        lstm_rate *= opts.plateau_decay;
        stalls = 0;
      }
    }
    result.final_val_ppl = ppl;
  };

  for (std::uint64_t epoch = 0; step < opts.steps; ++epoch) {
    auto groups = make_batches(train_corpus, opts.plan, epoch);
    if (groups.empty()) throw ContractError("train_model: empty training corpus");
    for (const auto& group : groups) {
      ++step;
      double lr = is_lstm ? lstm_rate
                          : warmup_inv_sqrt_lr(step, model.config().embedding_dim, opts.warmup,
                                               opts.lr_base);
      last_loss = train_step(model, group, optimizer, lr, is_lstm ? opts.clip_norm : 0.0);
      if (!std::isfinite(last_loss))
        throw std::runtime_error("training aborted: non-finite loss at step " +
                                 std::to_string(step));
      if (step % opts.validate_every == 0 || step == opts.steps) validate_and_log(last_loss);
      if (step >= opts.steps) break;
    }
  }
  result.final_train_loss = last_loss;
  if (result.metrics.empty()) validate_and_log(last_loss);
  return result;
}

}  // namespace lrnmt
