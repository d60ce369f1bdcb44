#include "lrnmt/bpe.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lrnmt/common.hpp"
#include "lrnmt/vocab.hpp"

namespace lrnmt {

std::vector<std::string> BpeModel::word_to_symbols(const std::string& word) {
  std::vector<std::string> symbols;
  for (char c : word) symbols.emplace_back(1, c);
  if (!symbols.empty()) symbols.back() += kWordEnd;
  return symbols;
}

BpeModel BpeModel::learn(const std::vector<std::string>& corpus, int merge_count) {
  if (merge_count < 0) throw ContractError("learn_bpe: merge count must be >= 0");

  // word frequency table, each word as its current symbol sequence
  std::map<std::string, std::int64_t> word_freq;
  for (const auto& line : corpus)
    for (auto& w : Vocab::split_whitespace(line)) ++word_freq[w];

  std::vector<std::pair<std::vector<std::string>, std::int64_t>> words;
  words.reserve(word_freq.size());
  for (const auto& [w, n] : word_freq) words.emplace_back(word_to_symbols(w), n);

  BpeModel model;
  for (int step = 0; step < merge_count; ++step) {
    std::map<std::pair<std::string, std::string>, std::int64_t> pair_counts;
    for (const auto& [symbols, n] : words)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i)
        pair_counts[{symbols[i], symbols[i + 1]}] += n;
    if (pair_counts.empty()) break;
    // most frequent pair; std::map order makes the tie-break the
    // lexicographically smallest pair
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it)
      if (it->second > best->second) best = it;
    model.merges_.push_back(best->first);
    const auto& [left, right] = best->first;
    std::string joined = left + right;
    for (auto& [symbols, n] : words) {
      std::vector<std::string> next;
      next.reserve(symbols.size());
      for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
          next.push_back(joined);
          ++i;
        } else {
          next.push_back(symbols[i]);
        }
      }
      symbols = std::move(next);
    }
  }

  std::set<std::string> symbols;
  for (const auto& [word, n] : words)
    for (const auto& s : word) symbols.insert(s);
  model.symbol_vocab_size_ = static_cast<std::int64_t>(symbols.size());
  return model;
}

std::vector<std::string> BpeModel::encode_word(const std::string& word) const {
  std::vector<std::string> symbols = word_to_symbols(word);
  // apply merges in learned priority order
  for (const auto& [left, right] : merges_) {
    if (symbols.size() < 2) break;
    std::vector<std::string> next;
    next.reserve(symbols.size());
    bool changed = false;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
        next.push_back(left + right);
        ++i;
        changed = true;
      } else {
        next.push_back(symbols[i]);
      }
    }
    if (changed) symbols = std::move(next);
  }
  return symbols;
}

std::vector<std::string> BpeModel::encode(const std::string& sentence) const {
  std::vector<std::string> out;
  for (auto& w : Vocab::split_whitespace(sentence)) {
    auto sub = encode_word(w);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::string BpeModel::decode(const std::vector<std::string>& tokens) {
  std::string joined;
  for (const auto& t : tokens) joined += t;
  std::string out;
  const std::string marker = kWordEnd;
  std::size_t pos = 0;
  while (pos < joined.size()) {
    std::size_t hit = joined.find(marker, pos);
    if (hit == std::string::npos) {
      out += joined.substr(pos);
      break;
    }
    out += joined.substr(pos, hit - pos);
    pos = hit + marker.size();
    if (pos < joined.size()) out += ' ';
  }
  return out;
}

void BpeModel::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write bpe file: " + path);
  out << "bpe-merges v1 " << symbol_vocab_size_ << "\n";
  for (const auto& [l, r] : merges_) out << l << " " << r << "\n";
}

BpeModel BpeModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open bpe file: " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic, version;
  BpeModel model;
  hs >> magic >> version >> model.symbol_vocab_size_;
  if (magic != "bpe-merges" || version != "v1")
    throw IoError("not a bpe merge file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t sp = line.find(' ');
    if (sp == std::string::npos) throw IoError("malformed merge line: " + line);
    model.merges_.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return model;
}

}  // namespace lrnmt
