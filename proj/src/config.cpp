#include "lrnmt/config.hpp"

#include <fstream>
#include <sstream>

#include "lrnmt/common.hpp"

namespace lrnmt {

std::pair<std::string, std::string>* KvDoc::find(const std::string& key) {
  for (auto& e : entries_)
    if (e.first == key) return &e;
  return nullptr;
}

const std::pair<std::string, std::string>* KvDoc::find(const std::string& key) const {
  for (auto& e : entries_)
    if (e.first == key) return &e;
  return nullptr;
}

void KvDoc::set(const std::string& key, std::string value) {
  if (auto* e = find(key))
    e->second = std::move(value);
  else
    entries_.emplace_back(key, std::move(value));
}

void KvDoc::set_int(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }

void KvDoc::set_double(const std::string& key, double value) {
  std::ostringstream os;
  os.precision(17);
  os << value;
  set(key, os.str());
}

void KvDoc::set_bool(const std::string& key, bool value) { set(key, value ? "true" : "false"); }

bool KvDoc::has(const std::string& key) const { return find(key) != nullptr; }

const std::string& KvDoc::get(const std::string& key) const {
  const auto* e = find(key);
  if (!e) throw ConfigError("missing config key: " + key);
  return e->second;
}

std::string KvDoc::get_or(const std::string& key, const std::string& fallback) const {
  const auto* e = find(key);
  return e ? e->second : fallback;
}

std::int64_t KvDoc::get_int(const std::string& key) const {
  try {
    return std::stoll(get(key));
  } catch (const std::invalid_argument&) {
    throw ConfigError("config key " + key + " is not an integer: " + get(key));
  }
}

std::int64_t KvDoc::get_int_or(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double KvDoc::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::invalid_argument&) {
    throw ConfigError("config key " + key + " is not a number: " + get(key));
  }
}

double KvDoc::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool KvDoc::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + " is not a boolean: " + v);
}

bool KvDoc::get_bool_or(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<std::string> KvDoc::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.first.rfind(prefix, 0) == 0) out.push_back(e.first);
  return out;
}

std::string KvDoc::emit() const {
  std::ostringstream os;
  for (const auto& e : entries_) os << e.first << " = " << e.second << "\n";
  return os.str();
}

KvDoc KvDoc::parse(const std::string& text) {
  KvDoc doc;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " has no '=': " + t);
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + " has empty key");
    doc.entries_.emplace_back(std::move(key), std::move(value));
  }
  return doc;
}

KvDoc KvDoc::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str());
}

void KvDoc::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  out << emit();
}

}  // namespace lrnmt
