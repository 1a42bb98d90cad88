#include "celeganser/config.hpp"

#include <charconv>

#include "celeganser/error.hpp"
#include "celeganser/io.hpp"

namespace celeganser::config {

namespace {

std::pair<std::string, std::string> split_flag(const std::string& arg) {
  std::string s = arg;
  if (s.starts_with("--")) s = s.substr(2);
  const auto eq = s.find('=');
  require(eq != std::string::npos && eq > 0, ErrorCode::kConfig,
          "expected key=value, got '" + arg + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

template <typename V>
V parse_number(const std::string& key, const std::string& text) {
  V value{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, value);
  require(ec == std::errc() && p == end && !text.empty(), ErrorCode::kConfig,
          "bad value '" + text + "' for " + key);
  return value;
}

}  // namespace

RunConfig::RunConfig(const std::map<std::string, std::string>& defaults,
                     const std::vector<std::string>& args)
    : values_(defaults) {
  std::vector<std::pair<std::string, std::string>> flags;
  std::string file;
  for (const auto& arg : args) {
    auto kv = split_flag(arg);
    if (kv.first == "config") file = kv.second;
    else flags.push_back(std::move(kv));
  }
  if (!file.empty()) {
    require(std::filesystem::exists(file), ErrorCode::kConfig, "config file not found: " + file);
    for (const auto& [k, v] : io::read_key_values(file)) set(k, v);
  }
  for (const auto& [k, v] : flags) set(k, v);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorCode::kConfig, "unknown key '" + key + "'");
  it->second = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorCode::kConfig, "missing key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}

double RunConfig::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  fail(ErrorCode::kConfig, "bad boolean '" + v + "' for " + key);
}

std::vector<std::string> RunConfig::echo_lines() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k + "=" + v);
  return out;
}

}  // namespace celeganser::config
