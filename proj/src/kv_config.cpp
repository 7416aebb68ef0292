#include "emarig/kv_config.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "emarig/error.hpp"

namespace emarig {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find(sep, pos);
    const auto piece = trim(s.substr(pos, next == std::string_view::npos ? s.npos : next - pos));
    if (!piece.empty()) out.emplace_back(piece);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

double parse_double(std::string_view s, const std::string& module, const std::string& context) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (s.empty() || ec != std::errc() || ptr != end) {
    if (s == "inf" || s == "infinity") return HUGE_VAL;
    throw Error(module, "BadNumber", fmt::format("{}: '{}' is not a number", context, s));
  }
  return value;
}

KeyValueFile KeyValueFile::parse(std::string_view text, const std::string& module) {
  KeyValueFile file(module);
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(module, "ParseError", fmt::format("line {}: unterminated section header", line_no));
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(module, "ParseError", fmt::format("line {}: expected 'key = value'", line_no));
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(module, "ParseError", fmt::format("line {}: empty key", line_no));
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (file.has(full)) {
      throw Error(module, "DuplicateKey", fmt::format("line {}: '{}' given twice", line_no, full));
    }
    file.set(full, std::string(trim(line.substr(eq + 1))), line_no);
  }
  return file;
}

void KeyValueFile::fail(const std::string& key, const std::string& what) const {
  const int line = line_of(key);
  if (line > 0) throw Error(module_, "BadValue", fmt::format("line {}: '{}' {}", line, key, what));
  throw Error(module_, "BadValue", fmt::format("'{}' {}", key, what));
}

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.value;
}

std::string KeyValueFile::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw Error(module_, "MissingKey", fmt::format("required key '{}' is missing", key));
  return *v;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  try {
    return parse_double(*v, module_, key);
  } catch (const Error&) {
    fail(key, "must be a number");
  }
}

int KeyValueFile::get_int(const std::string& key, int fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  int value = 0;
  const auto* end = v->data() + v->size();
  const auto [ptr, ec] = std::from_chars(v->data(), end, value);
  if (ec != std::errc() || ptr != end) fail(key, "must be an integer");
  return value;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "yes" || *v == "on" || *v == "1") return true;
  if (*v == "false" || *v == "no" || *v == "off" || *v == "0") return false;
  fail(key, "must be true or false");
}

std::optional<Vec3> KeyValueFile::get_vec3(const std::string& key) const {
  const auto v = get(key);
  if (!v) return std::nullopt;
  std::vector<std::string> parts;
  for (auto& p : split(*v, ' ')) {
    for (auto& q : split(p, ',')) parts.push_back(q);
  }
  if (parts.size() != 3) fail(key, "must hold three numbers");
  Vec3 out;
  for (int i = 0; i < 3; ++i) {
    try {
      out(i) = parse_double(parts[i], module_, key);
    } catch (const Error&) {
      fail(key, "must hold three numbers");
    }
  }
  return out;
}

std::vector<std::string> KeyValueFile::get_list(const std::string& key) const {
  const auto v = get(key);
  if (!v) return {};
  return split(*v, ',');
}

KeyValueFile KeyValueFile::section(const std::string& name) const {
  KeyValueFile out(module_);
  const std::string prefix = name + ".";
  for (const auto& [key, entry] : entries_) {
    if (key.compare(0, prefix.size(), prefix) == 0) {
      out.entries_[key.substr(prefix.size())] = entry;
    }
  }
  return out;
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [key, entry] : entries_) out.push_back(key);
  return out;
}

void KeyValueFile::set(const std::string& key, std::string value, int line) {
  entries_[key] = Entry{std::move(value), line};
}

int KeyValueFile::line_of(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

}  // namespace emarig
