#pragma once

// Flat "key=value" text files: one entry per line, '#' starts a comment line,
// keys may repeat and insertion order is preserved on write.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace eccd {

class KeyValueFile {
 public:
  void add(std::string key, std::string value) {
    entries_.emplace_back(std::move(key), std::move(value));
  }
  /// Replaces the first entry with this key, or appends.
  void set(const std::string& key, std::string value);

  std::optional<std::string> get(const std::string& key) const;
  /// Throws std::runtime_error naming the key if it is absent.
  std::string require(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  std::string to_string() const;
  /// Throws std::runtime_error on a line without '='.
  static KeyValueFile parse(const std::string& text, const std::string& origin = "");
  static KeyValueFile load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Strict whole-string parsers; throw std::invalid_argument naming `key`.
double parse_double(const std::string& key, const std::string& text);
std::uint64_t parse_u64(const std::string& key, const std::string& text);
bool parse_bool(const std::string& key, const std::string& text);

}  // namespace eccd
