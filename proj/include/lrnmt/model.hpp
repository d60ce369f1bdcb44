#pragma once

#include <map>
#include <memory>
#include <variant>

#include "lrnmt/data.hpp"
#include "lrnmt/scheme.hpp"

namespace lrnmt {

template <typename T>
struct LossInfo {
  Tensor<T> mean_loss;      // mean per-token cross-entropy over unmasked positions
  std::int64_t tokens = 0;  // unmasked target tokens in the batch
};

// Incremental decoding session for one source sentence. next_logprobs() is
// the log-distribution of the next target token given the tokens consumed so
// far (a fresh context has consumed only <bos>); push() consumes a token.
template <typename T>
class DecodeContext {
 public:
  virtual ~DecodeContext() = default;
  virtual std::unique_ptr<DecodeContext<T>> clone() const = 0;
  virtual const std::vector<double>& next_logprobs() = 0;
  virtual void push(std::int32_t token) = 0;
};

// A weight-matrix position that a factorization scheme may act on.
template <typename T>
struct SlotRef {
  std::string name;
  LayerGroup group;
  std::variant<Linear<T>*, Embedding<T>*> slot;
};

template <typename T>
class SeqModel {
 public:
  virtual ~SeqModel() = default;

  virtual const ModelConfig& config() const = 0;
  virtual const FactorizationScheme& scheme() const = 0;
  virtual void set_scheme(FactorizationScheme scheme) = 0;
  virtual const std::vector<std::string>& build_warnings() const = 0;

  // Every stored parameter, in a stable order, with live tensor pointers.
  virtual std::vector<ParamRef<T>> params() = 0;

  // Factorizable matrix slots (dense or already factorized).
  virtual std::vector<SlotRef<T>> factorizable_slots() = 0;

  // Teacher-forced loss. Throws ContractError on an empty batch.
  virtual LossInfo<T> forward_loss(Tape<T>& tape, const Batch& batch) const = 0;

  virtual std::unique_ptr<DecodeContext<T>> begin_decode(
      std::span<const std::int32_t> src) const = 0;

  void watch_params(Tape<T>& tape) {
    for (auto& p : params()) tape.watch(*p.tensor);
  }

  std::int64_t total_param_count() {
    std::int64_t total = 0;
    for (auto& p : params()) total += p.tensor->size();
    return total;
  }
};

// log-softmax of one logits row, in double.
template <typename T>
std::vector<double> log_softmax_row(const T* row, std::int64_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::int64_t i = 0; i < n; ++i) mx = std::max(mx, static_cast<double>(row[i]));
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) sum += std::exp(static_cast<double>(row[i]) - mx);
  double lse = mx + std::log(sum);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(row[i]) - lse;
  return out;
}

}  // namespace lrnmt
