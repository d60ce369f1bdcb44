#pragma once

#include <string>
#include <utility>
#include <vector>

namespace lrnmt {

// Byte-pair encoding over whitespace-delimited words. Words are split into
// characters with a "</w>" marker fused onto the final character; merges are
// learned greedily by pair frequency, ties broken by lexicographically
// smallest pair. decode(encode(s)) == s for whitespace-normalized strings.
class BpeModel {
 public:
  static constexpr const char* kWordEnd = "</w>";

  static BpeModel learn(const std::vector<std::string>& corpus, int merge_count);

  std::vector<std::string> encode_word(const std::string& word) const;
  std::vector<std::string> encode(const std::string& sentence) const;
  static std::string decode(const std::vector<std::string>& tokens);

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  std::int64_t symbol_vocab_size() const { return symbol_vocab_size_; }

  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);

  static std::vector<std::string> word_to_symbols(const std::string& word);

 private:
  std::vector<std::pair<std::string, std::string>> merges_;
  std::int64_t symbol_vocab_size_ = 0;
};

}  // namespace lrnmt
