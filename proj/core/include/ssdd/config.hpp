#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ssdd/errors.hpp"

namespace ssdd {

// Plain key=value configuration text: one pair per line, '#' comments,
// whitespace-insensitive around '='. Lookups record which keys were read so
// callers can flag typos.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  std::vector<std::string> unread_keys() const;
  // Canonical serialization (sorted keys); input to the config hash.
  std::string canonical_text() const;
  uint64_t hash() const;  // FNV-1a 64 over canonical_text

 private:
  const std::string* find(const std::string& key) const;
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> read_;
};

uint64_t fnv1a64(const std::string& text);

}  // namespace ssdd
