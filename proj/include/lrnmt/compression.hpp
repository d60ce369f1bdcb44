#pragma once

#include <tuple>

#include "lrnmt/linalg.hpp"
#include "lrnmt/model_build.hpp"

namespace lrnmt {

// Global (class-blind) magnitude pruning: zeroes the round(fraction * N)
// smallest-magnitude entries across all weight matrices; biases and norm
// parameters are exempt. Ties at the threshold break by tensor name, then
// flat index. Matrices stay dense.
template <typename T>
void prune_model(SeqModel<T>& model, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ContractError("prune: fraction must lie in [0, 1], got " + std::to_string(fraction));
  auto params = model.params();
  std::vector<ParamRef<T>*> weights;
  for (auto& p : params)
    if (p.is_weight_matrix) weights.push_back(&p);
  std::sort(weights.begin(), weights.end(),
            [](const ParamRef<T>* a, const ParamRef<T>* b) { return a->name < b->name; });

  std::int64_t total = 0;
  for (auto* w : weights) total += w->tensor->size();
  std::int64_t k = std::llround(fraction * static_cast<double>(total));
  if (k <= 0) return;

  struct Entry {
    T magnitude;
    std::int32_t param;
    std::int64_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(total));
  for (std::size_t wi = 0; wi < weights.size(); ++wi) {
    const Tensor<T>& t = *weights[wi]->tensor;
    for (std::int64_t i = 0; i < t.size(); ++i)
      entries.push_back({static_cast<T>(std::abs(t(i))), static_cast<std::int32_t>(wi), i});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.magnitude, a.param, a.index) < std::tie(b.magnitude, b.param, b.index);
  });
  for (std::int64_t i = 0; i < k; ++i)
    (*weights[static_cast<std::size_t>(entries[static_cast<std::size_t>(i)].param)]->tensor)(
        entries[static_cast<std::size_t>(i)].index) = T(0);
}

template <typename T>
std::int64_t count_weight_entries(SeqModel<T>& model) {
  std::int64_t total = 0;
  for (auto& p : model.params())
    if (p.is_weight_matrix) total += p.tensor->size();
  return total;
}

template <typename T>
std::int64_t count_zero_weight_entries(SeqModel<T>& model) {
  std::int64_t zeros = 0;
  for (auto& p : model.params()) {
    if (!p.is_weight_matrix) continue;
    for (std::int64_t i = 0; i < p.tensor->size(); ++i)
      if ((*p.tensor)(i) == T(0)) ++zeros;
  }
  return zeros;
}

namespace detail {

template <typename T>
Mat to_mat(const Tensor<T>& t) {
  Mat m(t.shape());
  for (std::int64_t i = 0; i < t.size(); ++i) m(i) = static_cast<double>(t(i));
  return m;
}

template <typename T>
Tensor<T> from_mat(const Mat& m) {
  Tensor<T> t(m.shape());
  for (std::int64_t i = 0; i < m.size(); ++i) t(i) = static_cast<T>(m(i));
  return t;
}

}  // namespace detail

// SVD-truncates every dense matrix in the mapped groups to its group's rank
// (0 means full rank per matrix), swapping in the balanced factor pair in
// place. Biases and activations stay where they were; the result is
// structurally an in-training-factorized model and remains trainable.
template <typename T>
void post_training_factorize(SeqModel<T>& model,
                             const std::map<LayerGroup, std::int64_t>& rank_map) {
  std::map<LayerGroup, std::int64_t> applied;
  for (auto& slot : model.factorizable_slots()) {
    auto it = rank_map.find(slot.group);
    if (it == rank_map.end()) continue;
    std::int64_t requested = it->second;
    auto factorize = [&](auto* layer, std::int64_t n, std::int64_t m, auto&& get_dense,
                         auto&& set) {
      std::int64_t p = requested == 0 ? std::min(n, m) : requested;
      if (p < 1 || p > std::min(n, m))
        throw ConfigError("post-training rank " + std::to_string(p) + " exceeds min(n,m) = " +
                          std::to_string(std::min(n, m)) + " for matrix " + slot.name);
      auto [a, b] = truncate_to_rank(detail::to_mat(get_dense(layer)), static_cast<int>(p));
      set(layer, detail::from_mat<T>(a), detail::from_mat<T>(b));
      applied[slot.group] = requested;
    };
    if (std::holds_alternative<Linear<T>*>(slot.slot)) {
      auto* lin = std::get<Linear<T>*>(slot.slot);
      if (lin->is_factorized()) continue;
      factorize(lin, lin->in_size(), lin->out_size(),
                [](Linear<T>* l) -> const Tensor<T>& { return l->dense_weight(); },
                [](Linear<T>* l, Tensor<T> a, Tensor<T> b) { l->set_factors(std::move(a), std::move(b)); });
    } else {
      auto* emb = std::get<Embedding<T>*>(slot.slot);
      if (emb->is_factorized()) continue;
      factorize(emb, emb->vocab_size(), emb->dim(),
                [](Embedding<T>* e) -> const Tensor<T>& { return e->dense_table(); },
                [](Embedding<T>* e, Tensor<T> a, Tensor<T> b) { e->set_factors(std::move(a), std::move(b)); });
    }
  }
  if (!applied.empty()) {
    FactorizationScheme scheme = FactorizationScheme::post_training(applied);
    model.set_scheme(std::move(scheme));
  }
}

// prune(post_training_factorize(model, ranks), fraction), exactly that order.
template <typename T>
void prune_after_factorize(SeqModel<T>& model, const std::map<LayerGroup, std::int64_t>& rank_map,
                           double fraction) {
  post_training_factorize(model, rank_map);
  prune_model(model, fraction);
}

// --- singular spectrum reporting ------------------------------------------

struct SpectrumEntry {
  std::string name;
  LayerGroup group;
  SingularSpectrum spectrum;
  int relevant_rank = 0;
  double relevant_fraction = 0.0;
};

struct SpectrumReport {
  double ratio = 0.1;
  std::vector<SpectrumEntry> entries;
};

// Singular spectrum of every rank-2 weight matrix in the model, with the
// relevant-value count at the given ratio of the dominant value.
template <typename T>
SpectrumReport spectrum_report(SeqModel<T>& model, double ratio = 0.1) {
  SpectrumReport report;
  report.ratio = ratio;
  for (auto& p : model.params()) {
    if (!p.is_weight_matrix || p.tensor->rank() != 2) continue;
    SpectrumEntry e;
    e.name = p.name;
    e.group = p.group;
    e.spectrum = singular_spectrum(detail::to_mat(*p.tensor), p.name);
    e.relevant_rank = relevant_rank(e.spectrum, ratio);
    e.relevant_fraction =
        static_cast<double>(e.relevant_rank) / static_cast<double>(e.spectrum.values.size());
    report.entries.push_back(std::move(e));
  }
  return report;
}

std::string spectrum_csv(const SpectrumReport& report, int top_k = 8);

}  // namespace lrnmt
