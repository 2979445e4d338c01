#pragma once

#include <cctype>
#include <map>
#include <set>
#include <string>

#include "venom/binio.hpp"
#include "venom/errors.hpp"

namespace venom {

/// Flat key=value configuration. Lines starting with '#' are comments;
/// surrounding whitespace is ignored; the last occurrence of a key wins.
using RunConfig = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::size_t lineno = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string line = detail::trim(text.substr(pos, end - pos));
    ++lineno;
    pos = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cfg[key] = detail::trim(line.substr(eq + 1));
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return parse_config_text(std::string(bytes.begin(), bytes.end()));
}

/// Rejects keys outside `known`, naming the first offender.
inline void check_known_keys(const RunConfig& cfg, const std::set<std::string>& known) {
  for (const auto& [k, v] : cfg)
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
}

/// Keys in sorted order, one per line.
inline std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg) out += k + "=" + v + "\n";
  return out;
}

}  // namespace venom
