#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stjm {

// Declarative key-value configuration: one "key = value" per line, '#'
// comments, comma-separated lists. CLI flags override file keys.
class Config {
 public:
  Config() = default;
  static Config load(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::optional<std::string> get_optional(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// One manifest per output directory; re-running a seeded command from the
// snapshot reproduces its outputs bit-exactly.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::map<std::string, std::string> config_snapshot;
  std::uint64_t seed = 0;
  std::string version;
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
};

void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

extern const char* kVersionString;

}  // namespace stjm
