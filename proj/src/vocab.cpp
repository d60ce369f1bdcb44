#include "lrnmt/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "lrnmt/common.hpp"

namespace lrnmt {

std::vector<std::string> Vocab::split_whitespace(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

Vocab Vocab::build(const std::vector<std::string>& sentences, std::size_t max_size) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& s : sentences)
    for (auto& tok : split_whitespace(s)) ++counts[tok];
  if (counts.empty()) throw ContractError("build_vocab: empty corpus");

  std::vector<std::pair<std::string, std::int64_t>> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& [tok, n] : sorted) {
    if (v.tokens_.size() >= max_size) break;
    v.tokens_.push_back(tok);
  }
  v.rebuild_index();
  return v;
}

void Vocab::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    index_[tokens_[i]] = static_cast<std::int32_t>(i);
}

std::int32_t Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_id : it->second;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw IndexError("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocab::encode(const std::string& sentence) const {
  std::vector<std::int32_t> out;
  for (auto& tok : split_whitespace(sentence)) out.push_back(id(tok));
  return out;
}

std::string Vocab::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (auto i : ids) {
    if (i < reserved_count) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocab file: " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocab file: " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.tokens_.push_back(line);
  }
  if (v.tokens_.size() < reserved_count)
    throw IoError("vocab file too short: " + path);
  v.rebuild_index();
  return v;
}

}  // namespace lrnmt
