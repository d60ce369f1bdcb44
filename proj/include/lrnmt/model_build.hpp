#pragma once

#include "lrnmt/lstm_model.hpp"
#include "lrnmt/transformer_model.hpp"

namespace lrnmt {

template <typename T>
std::unique_ptr<SeqModel<T>> build_model(const ModelConfig& cfg, const FactorizationScheme& scheme,
                                         std::uint64_t seed) {
  if (cfg.family == ModelFamily::lstm) return std::make_unique<LstmModel<T>>(cfg, scheme, seed);
  return std::make_unique<TransformerModel<T>>(cfg, scheme, seed);
}

// Structural copy with identical parameter values (fresh storage).
template <typename T>
std::unique_ptr<SeqModel<T>> clone_model(SeqModel<T>& src) {
  auto dst = build_model<T>(src.config(), src.scheme(), 0);
  auto sp = src.params();
  auto dp = dst->params();
  if (sp.size() != dp.size()) throw ContractError("clone_model: registry size mismatch");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (sp[i].name != dp[i].name || sp[i].tensor->shape() != dp[i].tensor->shape())
      throw ContractError("clone_model: parameter mismatch at " + sp[i].name);
    std::copy(sp[i].tensor->data(), sp[i].tensor->data() + sp[i].tensor->size(),
              dp[i].tensor->data());
  }
  return dst;
}

// Mean per-token loss over batches, without recording.
template <typename T>
double evaluate_mean_loss(SeqModel<T>& model, std::span<const Batch> batches) {
  double total = 0.0;
  std::int64_t tokens = 0;
  for (const Batch& b : batches) {
    Tape<T> tape = Tape<T>::no_grad();
    LossInfo<T> li = model.forward_loss(tape, b);
    total += static_cast<double>(li.mean_loss(0)) * static_cast<double>(li.tokens);
    tokens += li.tokens;
  }
  if (tokens == 0) throw ContractError("evaluate_mean_loss: no target tokens");
  return total / static_cast<double>(tokens);
}

template <typename T>
double evaluate_perplexity(SeqModel<T>& model, std::span<const Batch> batches) {
  return std::exp(evaluate_mean_loss(model, batches));
}

}  // namespace lrnmt
