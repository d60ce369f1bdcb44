#include "lrnmt/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace lrnmt {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

Corpus load_parallel(const std::string& src_path, const std::string& tgt_path) {
  auto src = read_lines(src_path);
  auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size())
    throw IoError("parallel corpus length mismatch: " + src_path + " has " +
                  std::to_string(src.size()) + " lines, " + tgt_path + " has " +
                  std::to_string(tgt.size()));
  Corpus out;
  out.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out.emplace_back(src[i], tgt[i]);
  return out;
}

void save_parallel(const Corpus& corpus, const std::string& src_path, const std::string& tgt_path) {
  std::ofstream src(src_path), tgt(tgt_path);
  if (!src || !tgt) throw IoError("cannot write corpus files: " + src_path + ", " + tgt_path);
  for (const auto& [s, t] : corpus) {
    src << s << "\n";
    tgt << t << "\n";
  }
}

Corpus synthetic_task(SyntheticKind kind, std::int64_t vocab_size, int min_len, int max_len,
                      std::int64_t count, std::uint64_t seed) {
  if (vocab_size < 2) throw ContractError("synthetic_task: vocab_size must be >= 2");
  if (min_len < 1 || max_len < min_len)
    throw ContractError("synthetic_task: invalid length range");
  Rng rng(seed);
  Corpus out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    int len = min_len + static_cast<int>(rng.uniform_int(max_len - min_len + 1));
    std::vector<std::string> toks(static_cast<std::size_t>(len));
    for (auto& t : toks) t = std::to_string(1 + rng.uniform_int(vocab_size));
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (j) s += ' ';
        s += v[j];
      }
      return s;
    };
    std::string src = join(toks);
    if (kind == SyntheticKind::reverse) std::reverse(toks.begin(), toks.end());
    out.emplace_back(std::move(src), join(toks));
  }
  return out;
}

std::vector<TokenizedPair> encode_corpus(const Corpus& corpus, const Vocab& src_vocab,
                                         const Vocab& tgt_vocab) {
  std::vector<TokenizedPair> out;
  out.reserve(corpus.size());
  for (const auto& [s, t] : corpus)
    out.push_back({src_vocab.encode(s), tgt_vocab.encode(t)});
  return out;
}

Batch make_batch(const std::vector<TokenizedPair>& pairs) {
  if (pairs.empty()) throw ContractError("make_batch: empty batch");
  Batch b;
  b.size = static_cast<std::int64_t>(pairs.size());
  for (const auto& p : pairs) {
    b.src_len = std::max(b.src_len, static_cast<std::int64_t>(p.src.size()));
    b.tgt_len = std::max(b.tgt_len, static_cast<std::int64_t>(p.tgt.size() + 1));  // +1 for bos/eos
  }
  b.src_len = std::max<std::int64_t>(b.src_len, 1);
  b.src.assign(static_cast<std::size_t>(b.size * b.src_len), Vocab::pad_id);
  b.src_mask.assign(static_cast<std::size_t>(b.size * b.src_len), 0.0f);
  b.tgt_in.assign(static_cast<std::size_t>(b.size * b.tgt_len), Vocab::pad_id);
  b.tgt_out.assign(static_cast<std::size_t>(b.size * b.tgt_len), Vocab::pad_id);
  b.tgt_mask.assign(static_cast<std::size_t>(b.size * b.tgt_len), 0.0f);
  for (std::int64_t i = 0; i < b.size; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < p.src.size(); ++j) {
      b.src[static_cast<std::size_t>(i * b.src_len) + j] = p.src[j];
      b.src_mask[static_cast<std::size_t>(i * b.src_len) + j] = 1.0f;
    }
    b.tgt_in[static_cast<std::size_t>(i * b.tgt_len)] = Vocab::bos_id;
    for (std::size_t j = 0; j < p.tgt.size(); ++j) {
      b.tgt_in[static_cast<std::size_t>(i * b.tgt_len) + j + 1] = p.tgt[j];
      b.tgt_out[static_cast<std::size_t>(i * b.tgt_len) + j] = p.tgt[j];
      b.tgt_mask[static_cast<std::size_t>(i * b.tgt_len) + j] = 1.0f;
    }
    b.tgt_out[static_cast<std::size_t>(i * b.tgt_len) + p.tgt.size()] = Vocab::eos_id;
    b.tgt_mask[static_cast<std::size_t>(i * b.tgt_len) + p.tgt.size()] = 1.0f;
  }
  return b;
}

std::vector<std::vector<Batch>> make_batches(const std::vector<TokenizedPair>& corpus,
                                             const BatchPlan& plan, std::uint64_t epoch) {
  if (plan.min_sentences < 1 || plan.max_sentences < plan.min_sentences || plan.accumulation < 1)
    throw ContractError("make_batches: invalid batch plan");
  if (corpus.empty()) return {};

  Rng rng(plan.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i)))]);

  // bucket by length inside shuffled windows to limit padding waste
  std::size_t window = static_cast<std::size_t>(plan.max_sentences) * static_cast<std::size_t>(plan.accumulation) * 4;
  for (std::size_t start = 0; start < order.size(); start += window) {
    std::size_t end = std::min(order.size(), start + window);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       return corpus[a].src.size() + corpus[a].tgt.size() <
                              corpus[b].src.size() + corpus[b].tgt.size();
                     });
  }

  std::vector<Batch> minibatches;
  std::size_t pos = 0;
  while (pos < order.size()) {
    std::size_t want = static_cast<std::size_t>(
        plan.min_sentences + rng.uniform_int(plan.max_sentences - plan.min_sentences + 1));
    std::size_t take = std::min(want, order.size() - pos);
    std::vector<TokenizedPair> chunk;
    chunk.reserve(take);
    for (std::size_t i = 0; i < take; ++i) chunk.push_back(corpus[order[pos + i]]);
    pos += take;
    minibatches.push_back(make_batch(chunk));
  }

  std::vector<std::vector<Batch>> groups;
  for (std::size_t i = 0; i < minibatches.size(); i += static_cast<std::size_t>(plan.accumulation)) {
    std::vector<Batch> group;
    for (std::size_t j = i; j < std::min(minibatches.size(), i + static_cast<std::size_t>(plan.accumulation)); ++j)
      group.push_back(std::move(minibatches[j]));
    groups.push_back(std::move(group));
  }
  for (std::size_t i = groups.size(); i > 1; --i)
    std::swap(groups[i - 1], groups[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i)))]);
  return groups;
}

}  // namespace lrnmt
