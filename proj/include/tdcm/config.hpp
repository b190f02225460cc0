#pragma once

// Flat key/value experiment configuration. Every key has a documented
// default; unknown keys are rejected. Files use `key = value` lines with `#`
// comments.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tdcm {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* description;
};

// All recognised keys in documentation order.
const std::vector<ConfigKey>& config_keys();

class ExperimentConfig {
 public:
  ExperimentConfig();

  static ExperimentConfig from_text(const std::string& text, const std::string& origin = "<text>");
  static ExperimentConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;

  double get_double(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::size_t get_size(const std::string& key) const { return static_cast<std::size_t>(get_uint(key)); }
  bool get_bool(const std::string& key) const;

  // Parses every typed key; throws ConfigError on the first invalid value.
  void validate() const;

  // Resolved `key = value` lines in documentation order.
  std::string dump() const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace tdcm
