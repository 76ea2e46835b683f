#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedransom {

/// Flat `key = value` text configuration. `#` starts a comment, blank lines
/// are ignored and later keys override earlier ones.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& file);

  bool contains(const std::string& key) const;
  void set(const std::string& key, std::string value);

  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma separated list with surrounding whitespace trimmed.
  std::vector<std::string> get_list(const std::string& key) const;

  /// All keys starting with `prefix`, with the prefix stripped.
  std::map<std::string, std::string> with_prefix(std::string_view prefix) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Canonical text form, one `key = value` per line in key order.
  std::string dump() const;

 private:
  std::map<std::string, std::string> entries_;
};

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace fedransom
