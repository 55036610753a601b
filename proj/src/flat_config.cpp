#include "chartwave/flat_config.hpp"

#include <sstream>

#include "chartwave/errors.hpp"

namespace chartwave {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

FlatConfig FlatConfig::parse(std::string_view text) {
  FlatConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip a trailing comment unless the '#' sits inside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw InvalidArgumentError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw InvalidArgumentError("line " + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    else if (!value.empty() && value.front() == '"')
      throw InvalidArgumentError("line " + std::to_string(lineno) + ": unterminated string");
    if (!cfg.values_.emplace(key, value).second)
      throw InvalidArgumentError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return cfg;
}

std::optional<std::string> FlatConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string FlatConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  auto v = get_optional_double(key);
  return v ? *v : fallback;
}

std::optional<double> FlatConfig::get_optional_double(const std::string& key) const {
  auto v = get(key);
  if (!v || v->empty() || *v == "none") return std::nullopt;
  try {
    std::size_t used = 0;
    const double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return d;
  } catch (const std::logic_error&) {
    throw InvalidArgumentError("key '" + key + "': not a number: " + *v);
  }
}

std::uint64_t FlatConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    if (v->empty() || v->front() == '-') throw std::invalid_argument(key);
    const auto u = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument(key);
    return u;
  } catch (const std::logic_error&) {
    throw InvalidArgumentError("key '" + key + "': not a non-negative integer: " + *v);
  }
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw InvalidArgumentError("key '" + key + "': not a boolean: " + *v);
}

std::vector<std::string> FlatConfig::get_list(const std::string& key,
                                              const std::vector<std::string>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<std::string> items;
  std::istringstream in(*v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

void FlatConfig::require_known(const std::set<std::string>& allowed) const {
  std::string unknown;
  for (const auto& [k, v] : values_) {
    if (!allowed.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw InvalidArgumentError("unknown keys: " + unknown);
}

}  // namespace chartwave
