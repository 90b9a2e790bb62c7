#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kaluza_klein.hpp"

namespace geoflow {

/// Flat `section.key = value` configuration; '#' starts a comment. Errors carry line numbers.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "config") {
    Config c;
    c.source_ = source;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw config_error(source + ":" + std::to_string(n) + ": expected 'key = value'");
      std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
      if (k.empty() || v.empty()) throw config_error(source + ":" + std::to_string(n) + ": empty key or value");
      for (char ch : k)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_'))
          throw config_error(source + ":" + std::to_string(n) + ": invalid key '" + k + "'");
      if (c.values_.count(k)) throw config_error(source + ":" + std::to_string(n) + ": duplicate key '" + k + "'");
      c.values_[k] = {v, n};
    }
    return c;
  }

  bool has(const std::string& k) const { return values_.count(k) > 0; }

  std::string str(const std::string& k, const std::string& def) const {
    used_.insert(k);
    auto it = values_.find(k);
    return it == values_.end() ? def : it->second.value;
  }
  std::string str(const std::string& k) const {
    used_.insert(k);
    auto it = values_.find(k);
    if (it == values_.end()) throw config_error(source_ + ": missing required key '" + k + "'");
    return it->second.value;
  }

  double num(const std::string& k, double def) const { return has(k) ? num(k) : (used_.insert(k), def); }
  double num(const std::string& k) const {
    const auto& e = entry(k);
    try {
      size_t used = 0;
      double v = std::stod(e.value, &used);
      if (used != e.value.size()) throw std::invalid_argument(e.value);
      return v;
    } catch (const std::logic_error&) {
      throw config_error(where(e) + ": '" + k + "' is not a number: " + e.value);
    }
  }
  long integer(const std::string& k, long def) const {
    if (!has(k)) {
      used_.insert(k);
      return def;
    }
    const auto& e = entry(k);
    try {
      size_t used = 0;
      long v = std::stol(e.value, &used);
      if (used != e.value.size()) throw std::invalid_argument(e.value);
      return v;
    } catch (const std::logic_error&) {
      throw config_error(where(e) + ": '" + k + "' is not an integer: " + e.value);
    }
  }
  std::uint64_t u64(const std::string& k, std::uint64_t def) const {
    if (!has(k)) {
      used_.insert(k);
      return def;
    }
    const auto& e = entry(k);
    try {
      size_t used = 0;
      auto v = std::stoull(e.value, &used);
      if (used != e.value.size() || e.value[0] == '-') throw std::invalid_argument(e.value);
      return v;
    } catch (const std::logic_error&) {
      throw config_error(where(e) + ": '" + k + "' is not an unsigned integer: " + e.value);
    }
  }
  /// comma-separated numbers, exactly `n` of them
  std::vector<double> list(const std::string& k, size_t n, std::vector<double> def) const {
    if (!has(k)) {
      used_.insert(k);
      return def;
    }
    const auto& e = entry(k);
    std::vector<double> out;
    std::istringstream ss(e.value);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell = trim(cell);
      try {
        size_t used = 0;
        out.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::logic_error&) {
        throw config_error(where(e) + ": '" + k + "' has a bad entry '" + cell + "'");
      }
    }
    if (out.size() != n) throw config_error(where(e) + ": '" + k + "' needs " + std::to_string(n) + " values");
    return out;
  }
  std::string choice(const std::string& k, const std::string& def, const std::vector<std::string>& allowed) const {
    std::string v = str(k, def);
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string msg = (has(k) ? where(values_.at(k)) : source_) + ": '" + k + "' must be one of";
      for (const auto& a : allowed) msg += " " + a;
      throw config_error(msg);
    }
    return v;
  }

  /// rejects keys that were never read
  void check_unused() const {
    for (const auto& [k, e] : values_)
      if (!used_.count(k)) throw config_error(where(e) + ": unknown key '" + k + "'");
  }

  /// line-numbered prefix for validation errors raised after parsing
  std::string at(const std::string& k) const { return has(k) ? where(values_.at(k)) : source_; }

 private:
  struct Entry {
    std::string value;
    int line;
  };
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  const Entry& entry(const std::string& k) const {
    used_.insert(k);
    auto it = values_.find(k);
    if (it == values_.end()) throw config_error(source_ + ": missing required key '" + k + "'");
    return it->second;
  }
  std::string where(const Entry& e) const { return source_ + ":" + std::to_string(e.line); }

  std::string source_;
  std::map<std::string, Entry> values_;
  mutable std::set<std::string> used_;
};

}  // namespace geoflow
