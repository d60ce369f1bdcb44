#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lrnmt {

// Ordered key-value document with dotted keys for nesting. Text form is one
// "key = value" per line; '#' starts a comment. Emit/parse round-trip
// exactly.
class KvDoc {
 public:
  void set(const std::string& key, std::string value);
  void set_int(const std::string& key, std::int64_t value);
  void set_double(const std::string& key, double value);
  void set_bool(const std::string& key, bool value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool_or(const std::string& key, bool fallback) const;

  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string emit() const;
  static KvDoc parse(const std::string& text);
  static KvDoc load(const std::string& path);
  void save(const std::string& path) const;

  bool operator==(const KvDoc& other) const { return entries_ == other.entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::pair<std::string, std::string>* find(const std::string& key);
  const std::pair<std::string, std::string>* find(const std::string& key) const;
};

}  // namespace lrnmt
