#pragma once

#include <filesystem>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>

namespace fslqa {

// Plain-text `key = value` settings. '#' starts a comment; blank lines are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Throws naming the first key not in `known`.
  void require_known(const std::initializer_list<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace fslqa
