#pragma once

// Plain-text key=value records, used for checkpoint metadata and run configs.

#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "tpr/errors.hpp"

namespace tpr {

using KvMap = std::map<std::string, std::string>;

inline KvMap parse_kv(std::string_view text) {
  KvMap out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("key=value: malformed line '" + line + "'");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

inline std::string format_kv(const KvMap& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

inline const std::string& kv_get(const KvMap& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("missing key '" + key + "'");
  return it->second;
}

// Shortest round-tripping decimal form of a double.
inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace tpr
