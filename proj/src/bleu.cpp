#include "lrnmt/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lrnmt/common.hpp"
#include "lrnmt/vocab.hpp"

namespace lrnmt {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::int64_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

BleuResult corpus_bleu(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references, bool smooth) {
  if (hypotheses.size() != references.size())
    throw ContractError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                        std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw ContractError("bleu: empty corpus");

  BleuResult r;
  r.smoothed = smooth;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    auto hyp = Vocab::split_whitespace(hypotheses[i]);
    auto ref = Vocab::split_whitespace(references[i]);
    r.hyp_length += static_cast<std::int64_t>(hyp.size());
    r.ref_length += static_cast<std::int64_t>(ref.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      NgramCounts hc = ngrams(hyp, n);
      NgramCounts rc = ngrams(ref, n);
      for (const auto& [gram, count] : hc) {
        auto it = rc.find(gram);
        std::int64_t clipped = it == rc.end() ? 0 : std::min(count, it->second);
        r.matches[n - 1] += clipped;
        r.totals[n - 1] += count;
      }
    }
  }

  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    std::int64_t m = r.matches[n], t = r.totals[n];
    double p;
    if (smooth && n >= 1) {
      p = static_cast<double>(m + 1) / static_cast<double>(t + 1);
    } else {
      p = t == 0 ? 0.0 : static_cast<double>(m) / static_cast<double>(t);
    }
    r.precisions[n] = p;
    if (p <= 0.0) {
      r.score = 0.0;
      r.brevity_penalty =
          r.hyp_length >= r.ref_length
              ? 1.0
              : std::exp(1.0 - static_cast<double>(r.ref_length) / std::max<std::int64_t>(1, r.hyp_length));
      return r;
    }
    log_sum += 0.25 * std::log(p);
  }
  r.brevity_penalty =
      r.hyp_length >= r.ref_length
          ? 1.0
          : std::exp(1.0 - static_cast<double>(r.ref_length) / std::max<std::int64_t>(1, r.hyp_length));
  r.score = 100.0 * r.brevity_penalty * std::exp(log_sum);
  return r;
}

}  // namespace lrnmt
