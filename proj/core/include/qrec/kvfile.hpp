#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace qrec {

// Flat `key = value` text config. `#` starts a comment, blank lines are
// ignored, keys must be unique. Parse errors carry the line number.
class KeyValueFile {
 public:
  static KeyValueFile parse_file(const std::string& path);
  static KeyValueFile parse_text(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& origin() const { return origin_; }

  // Typed getters; throw std::invalid_argument naming the key on a missing
  // required value or a malformed one.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;

  // Comma-separated integer list.
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  // Keys in this file that are not in `allowed`; used to reject unknown keys.
  std::vector<std::string> unknown_keys(const std::set<std::string>& allowed) const;

  // Canonical serialization: keys sorted, one `key = value` per line.
  std::string canonical_text() const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

// Parse helpers shared with CLI flag handling.
double parse_double(const std::string& text, const std::string& what);
std::int64_t parse_int(const std::string& text, const std::string& what);
std::vector<std::int64_t> parse_int_list(const std::string& text, const std::string& what);

}  // namespace qrec
