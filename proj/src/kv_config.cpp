#include "mugnet/kv_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "mugnet/errors.hpp"

namespace mugnet {

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

namespace {

double to_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError(what + ": '" + text + "' is not a number");
  }
  return v;
}

}  // namespace

std::vector<double> parse_doubles(const std::string& text, char sep) {
  std::vector<double> out;
  for (const auto& item : split_list(text, sep)) out.push_back(to_double(item, "list"));
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

KvConfig KvConfig::parse(std::istream& in) {
  KvConfig cfg;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    const std::string text = trim(raw);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line);
    std::string key = trim(text.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line);
    cfg.entries_.push_back({std::move(key), trim(text.substr(eq + 1)), line});
  }
  return cfg;
}

KvConfig KvConfig::parse_string(const std::string& text) {
  std::istringstream is(text);
  return parse(is);
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse(in);
}

const KvConfig::Entry* KvConfig::find_last(const std::string& key) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->key == key) return &*it;
  }
  return nullptr;
}

bool KvConfig::has(const std::string& key) const { return find_last(key) != nullptr; }

std::optional<std::string> KvConfig::get(const std::string& key) const {
  if (const auto* e = find_last(key)) return e->value;
  return std::nullopt;
}

std::vector<std::string> KvConfig::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.key == key) out.push_back(e.value);
  }
  return out;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto* e = find_last(key);
  if (!e) return fallback;
  try {
    return to_double(e->value, key);
  } catch (const ConfigError& err) {
    throw ParseError(err.what(), e->line);
  }
}

long KvConfig::get_int(const std::string& key, long fallback) const {
  const auto* e = find_last(key);
  if (!e) return fallback;
  long v = 0;
  const auto* end = e->value.data() + e->value.size();
  auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
  if (e->value.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(key + ": '" + e->value + "' is not an integer", e->line);
  }
  return v;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* e = find_last(key);
  if (!e) return fallback;
  std::string v = e->value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParseError(key + ": '" + e->value + "' is not a boolean", e->line);
}

void KvConfig::set(const std::string& key, const std::string& value) {
  std::erase_if(entries_, [&](const Entry& e) { return e.key == key; });
  entries_.push_back({key, value, 0});
}

void KvConfig::add(const std::string& key, const std::string& value) {
  entries_.push_back({key, value, 0});
}

void KvConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& e : entries_) {
    if (std::find(known.begin(), known.end(), e.key) == known.end()) {
      throw ConfigError("unknown key '" + e.key + "' on line " + std::to_string(e.line));
    }
  }
}

std::string KvConfig::to_string() const {
  std::ostringstream os;
  for (const auto& e : entries_) os << e.key << " = " << e.value << '\n';
  return os.str();
}

}  // namespace mugnet
