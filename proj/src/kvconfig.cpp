#include "gridlight/kvconfig.h"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gridlight {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

template <typename T, typename F>
T convert(const std::string& s, F f, bool& ok) {
  std::size_t used = 0;
  try {
    T v = f(s, &used);
    ok = used == s.size();
    return v;
  } catch (const std::exception&) {
    ok = false;
    return T{};
  }
}

int to_int(const std::string& s, bool& ok) {
  return convert<int>(s, [](const std::string& x, std::size_t* u) { return std::stoi(x, u); }, ok);
}

double to_double(const std::string& s, bool& ok) {
  return convert<double>(s, [](const std::string& x, std::size_t* u) { return std::stod(x, u); }, ok);
}

}  // namespace

KvConfig KvConfig::parse(const std::string& text, const std::string& source) {
  KvConfig cfg;
  std::istringstream is(text);
  int line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(where + ": expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::runtime_error(where + ": empty key");
    if (cfg.entries_.count(key)) throw std::runtime_error(where + ": duplicate key '" + key + "' (first at " + cfg.entries_[key].where + ")");
    cfg.entries_[key] = Entry{trim(line.substr(eq + 1)), where};
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

void KvConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KvConfig::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw std::runtime_error("--set with empty key");
  entries_[key] = Entry{value, "--set " + key};
}

const KvConfig::Entry* KvConfig::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void KvConfig::fail(const Entry& e, const std::string& key, const std::string& what) {
  throw std::runtime_error(e.where + ": " + key + " = '" + e.value + "' is not " + what);
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

int KvConfig::get_int(const std::string& key, int fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  bool ok = false;
  const int v = to_int(e->value, ok);
  if (!ok) fail(*e, key, "an integer");
  return v;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  bool ok = false;
  const double v = to_double(e->value, ok);
  if (!ok) fail(*e, key, "a number");
  return v;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  fail(*e, key, "a boolean");
}

std::vector<int> KvConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<int> out;
  for (const auto& tok : split_list(e->value)) {
    bool ok = false;
    out.push_back(to_int(tok, ok));
    if (!ok) fail(*e, key, "a list of integers");
  }
  if (out.empty()) fail(*e, key, "a nonempty list");
  return out;
}

std::vector<double> KvConfig::get_double_list(const std::string& key, const std::vector<double>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<double> out;
  for (const auto& tok : split_list(e->value)) {
    bool ok = false;
    out.push_back(to_double(tok, ok));
    if (!ok) fail(*e, key, "a list of numbers");
  }
  if (out.empty()) fail(*e, key, "a nonempty list");
  return out;
}

void KvConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [key, e] : entries_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw std::runtime_error(e.where + ": unknown key '" + key + "'");
  }
}

}  // namespace gridlight
