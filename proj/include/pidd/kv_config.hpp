#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pidd {

/// Ordered `key = value` text. Blank lines and lines starting with '#' are
/// ignored; duplicate keys are a format error.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<text>");
  static KeyValues read(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;

  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Keys that are not in `known`.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }
  /// Canonical "key = value\n" rendering in insertion order.
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace pidd
