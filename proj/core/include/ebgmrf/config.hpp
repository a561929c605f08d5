#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ebgmrf {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key(key) {}
  std::string key;
};

/// TOML-style key/value store with [dotted.sections]; one file fully
/// determines a run. Values: strings, numbers, booleans, homogeneous arrays.
class ConfigFile {
 public:
  using Value = std::variant<std::string, double, bool, std::vector<double>, std::vector<std::string>>;

  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  /// Keys directly under a section prefix, e.g. sections("prior") -> {"1","2"}.
  std::vector<std::string> subsections(const std::string& prefix) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<long long> get_ints(const std::string& key) const;

  void set_string(const std::string& key, const std::string& v) { values_[key] = v; }
  void set_double(const std::string& key, double v) { values_[key] = v; }
  void set_int(const std::string& key, long long v) { values_[key] = static_cast<double>(v); }
  void set_bool(const std::string& key, bool v) { values_[key] = v; }
  void set_doubles(const std::string& key, const std::vector<double>& v) { values_[key] = v; }

  const std::map<std::string, Value>& values() const { return values_; }

 private:
  std::map<std::string, Value> values_;
};

}  // namespace ebgmrf
