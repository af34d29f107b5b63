#pragma once

// `key = value` files: one entry per line, `#` starts a comment, blank lines
// ignored. Keys must be unique; every key must be consumed by the reader.

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

namespace volseg {

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<ConfigEntry> parse_config(std::istream& in, const std::string& source);
std::vector<ConfigEntry> read_config(const std::filesystem::path& path);

/// Typed access with unknown-key detection. Each get_* leaves the target
/// untouched when the key is absent.
class ConfigReader {
 public:
  ConfigReader(std::vector<ConfigEntry> entries, std::string source);

  bool has(const std::string& key) const;
  void get(const std::string& key, double& out);
  template <std::unsigned_integral T>
  void get(const std::string& key, T& out) {
    std::uint64_t v = out;
    get_unsigned(key, v);
    out = static_cast<T>(v);
  }
  void get(const std::string& key, bool& out);
  void get(const std::string& key, std::string& out);

  /// Throws ValidationError naming the first key nobody asked for.
  void finish() const;

 private:
  const ConfigEntry* find(const std::string& key);
  void get_unsigned(const std::string& key, std::uint64_t& out);

  std::vector<ConfigEntry> entries_;
  std::vector<bool> used_;
  std::string source_;
};

std::string format_config_value(double v);

}  // namespace volseg
