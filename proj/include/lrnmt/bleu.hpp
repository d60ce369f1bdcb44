#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lrnmt {

struct BleuResult {
  double score = 0.0;  // [0, 100]
  std::array<double, 4> precisions{};  // modified n-gram precisions
  std::array<std::int64_t, 4> matches{};
  std::array<std::int64_t, 4> totals{};
  double brevity_penalty = 1.0;
  std::int64_t hyp_length = 0;
  std::int64_t ref_length = 0;
  bool smoothed = false;
};

// Corpus-level BLEU on whitespace tokens: clipped 1..4-gram counts pooled
// over the corpus, geometric mean, brevity penalty. Unsmoothed by default
// (any zero n-gram precision gives 0); smooth=true applies add-one to the
// n >= 2 orders and flags the result.
BleuResult corpus_bleu(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references, bool smooth = false);

}  // namespace lrnmt
