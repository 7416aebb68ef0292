#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emarig/geometry.hpp"

namespace emarig {

// `key = value` text with optional `[section]` headers and `#` comments.
// Keys inside a section are stored as `section.key`.
class KeyValueFile {
 public:
  KeyValueFile() = default;
  KeyValueFile(std::string module) : module_(std::move(module)) {}

  static KeyValueFile parse(std::string_view text, const std::string& module);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::optional<Vec3> get_vec3(const std::string& key) const;
  // Comma-separated, whitespace-trimmed, empty items dropped.
  std::vector<std::string> get_list(const std::string& key) const;

  // Entries under `name.`, with the prefix removed.
  KeyValueFile section(const std::string& name) const;
  std::vector<std::string> keys() const;

  void set(const std::string& key, std::string value, int line = 0);
  int line_of(const std::string& key) const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::string module_ = "config";
  std::map<std::string, Entry> entries_;
};

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
double parse_double(std::string_view s, const std::string& module, const std::string& context);

}  // namespace emarig
