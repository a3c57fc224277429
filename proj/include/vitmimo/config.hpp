#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace vitmimo {

// Flat key-value text with sections:
//
//   # comment
//   [train]
//   steps = 200
//
// Keys are addressed as "section.key". Values set later (command-line
// overrides) replace file values and remember their origin for diagnostics.
class KeyValueConfig {
 public:
  struct Entry {
    std::string value;
    std::string origin;  // "file:line" or the override flag
  };

  static KeyValueConfig parse(std::string_view text, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value, const std::string& origin = "override");
  void set_default(const std::string& key, std::string value);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated; empty entries dropped.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  // Throws ConfigError for the first key not in `known` (exact keys, or
  // "section.*" wildcards).
  void reject_unknown(const std::vector<std::string>& known) const;

  // ConfigError message prefixed with the key and its origin.
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

  std::string to_text() const;

 private:
  std::map<std::string, Entry> entries_;
};

// "1/24", "0.5" -> double. Throws ConfigError.
double parse_ratio(const std::string& text);
double parse_double(const std::string& text);
std::uint64_t parse_u64(const std::string& text);

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace vitmimo
