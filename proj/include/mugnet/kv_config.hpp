#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mugnet {

// `key = value` text with '#' comments. Keys may repeat; lookups return the
// last occurrence, get_all() returns every occurrence in file order.
class KvConfig {
 public:
  struct Entry {
    std::string key;
    std::string value;
    std::size_t line = 0;
  };

  static KvConfig parse(std::istream& in);
  static KvConfig parse_string(const std::string& text);
  static KvConfig load(const std::filesystem::path& path);

  const std::vector<Entry>& entries() const { return entries_; }
  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  void add(const std::string& key, const std::string& value);

  // Throws ConfigError naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  std::string to_string() const;

 private:
  const Entry* find_last(const std::string& key) const;
  std::vector<Entry> entries_;
};

// "1,2, 3" -> {"1","2","3"}
std::vector<std::string> split_list(const std::string& text, char sep = ',');
std::vector<double> parse_doubles(const std::string& text, char sep = ',');
std::string trim(const std::string& text);
std::string format_double(double value);

}  // namespace mugnet
