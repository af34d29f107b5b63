#include "volseg/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "volseg/errors.hpp"

namespace volseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(const std::string& source, const ConfigEntry& e) {
  return source + ":" + std::to_string(e.line) + ": ";
}

}  // namespace

std::vector<ConfigEntry> parse_config(std::istream& in, const std::string& source) {
  std::vector<ConfigEntry> out;
  std::set<std::string> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(source + ":" + std::to_string(line) + ": expected `key = value`");
    }
    ConfigEntry e{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line};
    if (e.key.empty()) throw ValidationError(source + ":" + std::to_string(line) + ": empty key");
    if (!seen.insert(e.key).second) {
      throw ValidationError(source + ":" + std::to_string(line) + ": duplicate key " + e.key);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ConfigEntry> read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

ConfigReader::ConfigReader(std::vector<ConfigEntry> entries, std::string source)
    : entries_(std::move(entries)), used_(entries_.size(), false), source_(std::move(source)) {}

bool ConfigReader::has(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.key == key) return true;
  return false;
}

const ConfigEntry* ConfigReader::find(const std::string& key) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].key == key) {
      used_[i] = true;
      return &entries_[i];
    }
  }
  return nullptr;
}

void ConfigReader::get(const std::string& key, double& out) {
  const auto* e = find(key);
  if (!e) return;
  double v = 0.0;
  const char* end = e->value.data() + e->value.size();
  auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ValidationError(where(source_, *e) + key + " expects a number, got `" + e->value + "`");
  }
  out = v;
}

void ConfigReader::get_unsigned(const std::string& key, std::uint64_t& out) {
  const auto* e = find(key);
  if (!e) return;
  std::uint64_t v = 0;
  const char* end = e->value.data() + e->value.size();
  auto [ptr, ec] = std::from_chars(e->value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError(where(source_, *e) + key + " expects a non-negative integer, got `" +
                          e->value + "`");
  }
  out = v;
}

void ConfigReader::get(const std::string& key, bool& out) {
  const auto* e = find(key);
  if (!e) return;
  if (e->value == "true" || e->value == "1") {
    out = true;
  } else if (e->value == "false" || e->value == "0") {
    out = false;
  } else {
    throw ValidationError(where(source_, *e) + key + " expects true or false");
  }
}

void ConfigReader::get(const std::string& key, std::string& out) {
  if (const auto* e = find(key)) out = e->value;
}

void ConfigReader::finish() const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!used_[i]) throw ValidationError(where(source_, entries_[i]) + "unknown key " + entries_[i].key);
  }
}

std::string format_config_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace volseg
