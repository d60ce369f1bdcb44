#pragma once

#include "lrnmt/common.hpp"
#include "lrnmt/vocab.hpp"

namespace lrnmt {

// Aligned sentence pairs, one (source, target) string per element.
using Corpus = std::vector<std::pair<std::string, std::string>>;

Corpus load_parallel(const std::string& src_path, const std::string& tgt_path);
void save_parallel(const Corpus& corpus, const std::string& src_path, const std::string& tgt_path);

enum class SyntheticKind { copy, reverse };

inline SyntheticKind synthetic_kind_from_name(const std::string& s) {
  if (s == "copy") return SyntheticKind::copy;
  if (s == "reverse") return SyntheticKind::reverse;
  throw ConfigError("unknown synthetic task: " + s);
}

// Deterministic stand-in corpus: integer tokens "1".."vocab_size", lengths
// uniform in [min_len, max_len]; target is the source (copy) or the source
// reversed (reverse).
Corpus synthetic_task(SyntheticKind kind, std::int64_t vocab_size, int min_len, int max_len,
                      std::int64_t count, std::uint64_t seed);

struct TokenizedPair {
  std::vector<std::int32_t> src, tgt;
};

std::vector<TokenizedPair> encode_corpus(const Corpus& corpus, const Vocab& src_vocab,
                                         const Vocab& tgt_vocab);

// One padded mini-batch. Row-major (batch, len) buffers; masks are 1 on real
// tokens and 0 on padding. tgt_in rows start with <bos>; tgt_out rows end
// with <eos>; the target mask covers tokens plus <eos>.
struct Batch {
  std::int64_t size = 0, src_len = 0, tgt_len = 0;
  std::vector<std::int32_t> src, tgt_in, tgt_out;
  std::vector<float> src_mask, tgt_mask;

  std::int64_t token_count() const {
    std::int64_t n = 0;
    for (float m : tgt_mask) n += m > 0.5f ? 1 : 0;
    return n;
  }
};

struct BatchPlan {
  int min_sentences = 12;
  int max_sentences = 16;
  int accumulation = 8;
  std::uint64_t seed = 1;

  int effective_batch() const { return max_sentences * accumulation; }
};

Batch make_batch(const std::vector<TokenizedPair>& pairs);

// One epoch of accumulation groups. Every sentence appears exactly once;
// sentences are shuffled with the plan seed (xor epoch), bucketed by length
// to limit padding, cut into mini-batches of size in [min, max], grouped by
// the accumulation count, and the group order reshuffled.
std::vector<std::vector<Batch>> make_batches(const std::vector<TokenizedPair>& corpus,
                                             const BatchPlan& plan, std::uint64_t epoch = 0);

}  // namespace lrnmt
