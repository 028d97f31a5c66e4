#pragma once
// Plain-text key = value run configuration. Lines starting with '#' are
// comments; keys are dot-free identifiers matching the documented names.

#include <map>
#include <string>
#include <vector>

namespace wildflow {

class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  long get_long(const std::string& key) const;
  long get_long(const std::string& key, long dflt) const;
  std::vector<double> get_doubles(const std::string& key) const;  // comma separated
  std::vector<long> get_longs(const std::string& key) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace wildflow
