#include "ebgmrf/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ebgmrf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quote = !in_quote;
    if (line[i] == '#' && !in_quote) return line.substr(0, i);
  }
  return line;
}

bool parse_number(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

ConfigFile::Value parse_value(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v.empty()) throw ConfigError(key, "empty value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw ConfigError(key, "unterminated string");
    return v.substr(1, v.size() - 2);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '[') {
    if (v.back() != ']') throw ConfigError(key, "unterminated array");
    const std::string body = trim(v.substr(1, v.size() - 2));
    std::vector<double> nums;
    std::vector<std::string> strs;
    bool is_string = false;
    if (!body.empty()) {
      std::stringstream ss(body);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(key, "empty array element");
        if (item.front() == '"') {
          if (item.size() < 2 || item.back() != '"') throw ConfigError(key, "bad string element");
          strs.push_back(item.substr(1, item.size() - 2));
          is_string = true;
        } else {
          double d;
          if (!parse_number(item, d)) throw ConfigError(key, "bad numeric element '" + item + "'");
          nums.push_back(d);
        }
      }
    }
    if (is_string && !nums.empty()) throw ConfigError(key, "mixed array element types");
    if (is_string) return strs;
    return nums;
  }
  double d;
  if (parse_number(v, d)) return d;
  throw ConfigError(key, "cannot parse value '" + v + "'");
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(lineno), "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    cfg.values_[full] = parse_value(full, line.substr(eq + 1));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ConfigFile::serialize() const {
  // Group by section; emit root keys first.
  std::ostringstream out;
  std::map<std::string, std::map<std::string, const Value*>> sections;
  for (const auto& [key, value] : values_) {
    const auto dot = key.rfind('.');
    if (dot == std::string::npos)
      sections[""][key] = &value;
    else
      sections[key.substr(0, dot)][key.substr(dot + 1)] = &value;
  }
  auto emit = [&out](const std::string& key, const Value& v) {
    out << key << " = ";
    if (std::holds_alternative<std::string>(v)) {
      out << '"' << std::get<std::string>(v) << '"';
    } else if (std::holds_alternative<bool>(v)) {
      out << (std::get<bool>(v) ? "true" : "false");
    } else if (std::holds_alternative<double>(v)) {
      std::ostringstream num;
      num.precision(17);
      num << std::get<double>(v);
      out << num.str();
    } else if (std::holds_alternative<std::vector<double>>(v)) {
      out << '[';
      const auto& xs = std::get<std::vector<double>>(v);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        std::ostringstream num;
        num.precision(17);
        num << xs[i];
        out << (i ? ", " : "") << num.str();
      }
      out << ']';
    } else {
      out << '[';
      const auto& xs = std::get<std::vector<std::string>>(v);
      for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? ", " : "") << '"' << xs[i] << '"';
      out << ']';
    }
    out << '\n';
  };
  for (const auto& [name, keys] : sections) {
    if (!name.empty()) out << '[' << name << "]\n";
    for (const auto& [key, value] : keys) emit(key, *value);
  }
  return out.str();
}

void ConfigFile::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError(path, "cannot write config file");
  out << serialize();
}

std::vector<std::string> ConfigFile::subsections(const std::string& prefix) const {
  std::vector<std::string> out;
  const std::string p = prefix + ".";
  for (const auto& [key, value] : values_) {
    (void)value;
    if (key.rfind(p, 0) != 0) continue;
    const auto rest = key.substr(p.size());
    const auto dot = rest.find('.');
    if (dot == std::string::npos) continue;
    const std::string sub = rest.substr(0, dot);
    if (out.empty() || out.back() != sub) {
      if (std::find(out.begin(), out.end(), sub) == out.end()) out.push_back(sub);
    }
  }
  return out;
}

std::string ConfigFile::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing");
  if (!std::holds_alternative<std::string>(it->second)) throw ConfigError(key, "expected string");
  return std::get<std::string>(it->second);
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double ConfigFile::get_double(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing");
  if (!std::holds_alternative<double>(it->second)) throw ConfigError(key, "expected number");
  return std::get<double>(it->second);
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long ConfigFile::get_int(const std::string& key) const {
  const double d = get_double(key);
  const long long v = static_cast<long long>(std::llround(d));
  if (std::abs(d - static_cast<double>(v)) > 1e-9) throw ConfigError(key, "expected integer");
  return v;
}

long long ConfigFile::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool ConfigFile::get_bool(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing");
  if (!std::holds_alternative<bool>(it->second)) throw ConfigError(key, "expected boolean");
  return std::get<bool>(it->second);
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<double> ConfigFile::get_doubles(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing");
  if (std::holds_alternative<double>(it->second)) return {std::get<double>(it->second)};
  if (!std::holds_alternative<std::vector<double>>(it->second))
    throw ConfigError(key, "expected numeric array");
  return std::get<std::vector<double>>(it->second);
}

std::vector<long long> ConfigFile::get_ints(const std::string& key) const {
  const auto ds = get_doubles(key);
  std::vector<long long> out;
  out.reserve(ds.size());
  for (double d : ds) {
    const long long v = static_cast<long long>(std::llround(d));
    if (std::abs(d - static_cast<double>(v)) > 1e-9) throw ConfigError(key, "expected integer array");
    out.push_back(v);
  }
  return out;
}

}  // namespace ebgmrf
