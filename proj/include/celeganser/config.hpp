#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace celeganser::config {

/// key=value settings for one command. Values come from the defaults, then an
/// optional file named by `config=<path>`, then the command-line flags
/// (`key=value` or `--key=value`). Keys absent from the defaults are rejected
/// with kConfig.
class RunConfig {
 public:
  RunConfig() = default;
  RunConfig(const std::map<std::string, std::string>& defaults,
            const std::vector<std::string>& args);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Empty values mean "unset".
  bool is_set(const std::string& key) const { return has(key) && !get(key).empty(); }

  void set(const std::string& key, const std::string& value);

  const std::map<std::string, std::string>& values() const { return values_; }
  /// "key=value" lines in key order.
  std::vector<std::string> echo_lines() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace celeganser::config
