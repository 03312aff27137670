#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mlcl {

// Flat `key = value` text with optional `[section]` headers; keys inside a section are
// stored as `section.key`. `#` starts a comment.
class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  static KeyValueFile parse(const std::string& text);
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const Entry& at(const std::string& key) const;
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  std::string get(const std::string& key) const { return at(key).value; }
  std::string get_or(const std::string& key, const std::string& fallback) const;

  void set(const std::string& key, std::string value, std::size_t line = 0);

 private:
  std::map<std::string, Entry> entries_;
};

double parse_double(const std::string& text, const std::string& what);
std::size_t parse_count(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);
std::vector<std::size_t> parse_index_list(const std::string& text, char sep,
                                          const std::string& what);
std::vector<double> parse_double_list(const std::string& text, char sep, const std::string& what);

// Shortest text that round-trips with 17 significant digits.
std::string format_double(double v);

std::string trim(const std::string& s);

}  // namespace mlcl
