#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace idm {

// Configuration problems are their own category: the CLI maps them to exit
// code 2, runtime failures to 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layered key/value configuration with provenance. Keys are flat dotted names
// ("training.batch_size"); later set() calls overwrite earlier ones, so the
// caller fixes precedence by layering order: defaults, config file, IDM_SEED,
// command-line flags.
class RunConfig {
 public:
  void set(const std::string& key, const std::string& value, const std::string& source) {
    entries_[key] = {value, source};
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string str(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing required config key: " + key);
    return it->second.value;
  }

  std::string str_or(const std::string& key, const std::string& def) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? def : it->second.value;
  }

  double f64(const std::string& key) const {
    const std::string s = str(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
      throw ConfigError("config key " + key + ": not a number: '" + s + "'");
    }
    return v;
  }
  double f64_or(const std::string& key, double def) const {
    return has(key) ? f64(key) : def;
  }

  long long i64(const std::string& key) const {
    const std::string s = str(key);
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') {
      throw ConfigError("config key " + key + ": not an integer: '" + s + "'");
    }
    return v;
  }
  long long i64_or(const std::string& key, long long def) const {
    return has(key) ? i64(key) : def;
  }

  std::size_t size_or(const std::string& key, std::size_t def) const {
    if (!has(key)) return def;
    const long long v = i64(key);
    if (v < 0) throw ConfigError("config key " + key + ": must be non-negative");
    return static_cast<std::size_t>(v);
  }

  // INI-ish file: [section] headers, key = value lines, # or ; comments.
  void load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']') {
          throw ConfigError(path + ":" + std::to_string(line_no) + ": unterminated section");
        }
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const std::size_t eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
      }
      set(section.empty() ? key : section + "." + key, value, "config");
    }
  }

  std::string resolved_text() const {
    std::ostringstream os;
    for (const auto& [key, e] : entries_) {
      os << key << " = " << e.value << "   # " << e.source << "\n";
    }
    return os.str();
  }

  void write_resolved(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write resolved config: " + path);
    os << resolved_text();
  }

 private:
  struct Entry {
    std::string value;
    std::string source;
  };

  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  std::map<std::string, Entry> entries_;
};

}  // namespace idm
