#pragma once

#include <algorithm>

#include "lrnmt/model.hpp"

namespace lrnmt {

struct Hypothesis {
  std::vector<std::int32_t> tokens;  // emitted tokens, <eos> excluded
  double logprob = 0.0;              // cumulative, includes <eos> when ended
  double score = 0.0;                // logprob / length^alpha
  bool ended = false;                // terminated by <eos> (vs. length cutoff)
  int length = 0;                    // scored tokens, <eos> included when ended

  static double normalized(double logprob, int length, double alpha) {
    return logprob / std::pow(static_cast<double>(std::max(length, 1)), alpha);
  }
};

// Standard beam expansion: each step keeps the top beam_width partial
// hypotheses by cumulative log-probability; a hypothesis retires when it
// emits <eos> or reaches max_len steps. The final answer maximizes the
// length-normalized score over everything retired.
template <typename T>
Hypothesis beam_search(const SeqModel<T>& model, std::span<const std::int32_t> src,
                       int beam_width, int max_len, double alpha = 1.0) {
  if (beam_width < 1) throw ContractError("beam_search: beam width must be >= 1");
  if (max_len < 1) throw ContractError("beam_search: max_len must be >= 1");

  struct Live {
    std::unique_ptr<DecodeContext<T>> ctx;
    std::vector<std::int32_t> tokens;
    double logprob = 0.0;
  };
  std::vector<Live> live;
  live.push_back({model.begin_decode(src), {}, 0.0});
  std::vector<Hypothesis> done;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    struct Cand {
      std::size_t parent;
      std::int32_t token;
      double logprob;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto& lp = live[i].ctx->next_logprobs();
      for (std::size_t v = 0; v < lp.size(); ++v)
        cands.push_back({i, static_cast<std::int32_t>(v), live[i].logprob + lp[v]});
    }
    std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(beam_width), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    cands.resize(keep);

    std::vector<Live> next;
    for (const Cand& c : cands) {
      if (c.token == Vocab::eos_id) {
        int len = static_cast<int>(live[c.parent].tokens.size()) + 1;
        done.push_back({live[c.parent].tokens, c.logprob,
                        Hypothesis::normalized(c.logprob, len, alpha), true, len});
        continue;
      }
      Live child;
      child.ctx = live[c.parent].ctx->clone();
      child.ctx->push(c.token);
      child.tokens = live[c.parent].tokens;
      child.tokens.push_back(c.token);
      child.logprob = c.logprob;
      next.push_back(std::move(child));
    }
    live = std::move(next);
  }
  for (auto& l : live) {
    int len = static_cast<int>(l.tokens.size());
    done.push_back({std::move(l.tokens), l.logprob, Hypothesis::normalized(l.logprob, len, alpha),
                    false, len});
  }

  Hypothesis best = done.front();
  for (const auto& h : done)
    if (h.score > best.score) best = h;
  return best;
}

// Greedy decode (argmax at each step); equivalent to beam_search with width 1.
template <typename T>
Hypothesis greedy_decode(const SeqModel<T>& model, std::span<const std::int32_t> src, int max_len,
                         double alpha = 1.0) {
  auto ctx = model.begin_decode(src);
  Hypothesis h;
  for (int step = 0; step < max_len; ++step) {
    const auto& lp = ctx->next_logprobs();
    std::size_t argmax = 0;
    for (std::size_t v = 1; v < lp.size(); ++v)
      if (lp[v] > lp[argmax]) argmax = v;
    h.logprob += lp[argmax];
    if (static_cast<std::int32_t>(argmax) == Vocab::eos_id) {
      h.ended = true;
      h.length = static_cast<int>(h.tokens.size()) + 1;
      h.score = Hypothesis::normalized(h.logprob, h.length, alpha);
      return h;
    }
    h.tokens.push_back(static_cast<std::int32_t>(argmax));
    ctx->push(static_cast<std::int32_t>(argmax));
  }
  h.length = static_cast<int>(h.tokens.size());
  h.score = Hypothesis::normalized(h.logprob, h.length, alpha);
  return h;
}

}  // namespace lrnmt
