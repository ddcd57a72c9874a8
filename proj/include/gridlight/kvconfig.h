#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gridlight {

// "key = value" text, one entry per line, '#' starts a comment.
class KvConfig {
 public:
  static KvConfig parse(const std::string& text, const std::string& source = "<config>");
  static KvConfig load(const std::filesystem::path& path);

  // "key=value" from the command line; replaces any file value.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const;

  // Throws naming the first key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

 private:
  struct Entry {
    std::string value;
    std::string where;  // "file:line" or "--set"
  };
  const Entry* find(const std::string& key) const;
  [[noreturn]] static void fail(const Entry& e, const std::string& key, const std::string& what);

  std::map<std::string, Entry> entries_;
};

}  // namespace gridlight
