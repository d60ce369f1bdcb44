#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lrnmt {

// Word-level vocabulary with fixed reserved ids. Built from a corpus by
// frequency with a frequency-then-lexicographic tie-break.
class Vocab {
 public:
  static constexpr std::int32_t pad_id = 0;
  static constexpr std::int32_t bos_id = 1;
  static constexpr std::int32_t eos_id = 2;
  static constexpr std::int32_t unk_id = 3;
  static constexpr std::int32_t reserved_count = 4;

  static Vocab build(const std::vector<std::string>& sentences, std::size_t max_size);

  std::int32_t id(const std::string& token) const;
  const std::string& token(std::int32_t id) const;
  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }

  std::vector<std::int32_t> encode(const std::string& sentence) const;
  std::string decode(std::span<const std::int32_t> ids) const;  // skips reserved ids

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  static std::vector<std::string> split_whitespace(const std::string& text);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  void rebuild_index();
};

}  // namespace lrnmt
