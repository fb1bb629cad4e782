#include "mhs/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace mhs {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_csv(const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

ConfigDoc ConfigDoc::parse(const std::string& text) {
  ConfigDoc doc;
  std::istringstream in(text);
  std::string line;
  std::string current;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header '" + t + "'");
      current = trim(t.substr(1, t.size() - 2));
      if (current.empty() || current.find_first_of("[]") != std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section name '" + t + "'");
      doc.sections_[current];  // section may stay empty
      continue;
    }
    if (current.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": content before any [section]");
    size_t eq = t.find('=');
    if (eq != std::string::npos) {
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty key");
      doc.sections_[current].kv.emplace_back(key, value);
    } else {
      doc.sections_[current].rows.push_back(split_ws(t));
    }
  }
  return doc;
}

ConfigDoc ConfigDoc::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

bool ConfigDoc::has_section(const std::string& name) const {
  return sections_.count(name) > 0;
}

const ConfigDoc::Section& ConfigDoc::section(const std::string& name) const {
  auto it = sections_.find(name);
  if (it == sections_.end())
    throw ConfigError("missing config section [" + name + "]");
  return it->second;
}

std::optional<std::string> ConfigDoc::find(const std::string& sec,
                                           const std::string& key) const {
  auto it = sections_.find(sec);
  if (it == sections_.end()) return std::nullopt;
  // last occurrence wins so overlays can append
  std::optional<std::string> found;
  for (const auto& [k, v] : it->second.kv)
    if (k == key) found = v;
  return found;
}

bool ConfigDoc::has_key(const std::string& sec, const std::string& key) const {
  return find(sec, key).has_value();
}

std::string ConfigDoc::get_string(const std::string& sec,
                                  const std::string& key,
                                  const std::string& fallback) const {
  auto v = find(sec, key);
  return v ? *v : fallback;
}

int64_t ConfigDoc::get_int(const std::string& sec, const std::string& key,
                           int64_t fallback) const {
  auto v = find(sec, key);
  if (!v) return fallback;
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size())
    throw ConfigError("[" + sec + "] " + key + ": expected integer, got '" +
                      *v + "'");
  return out;
}

double ConfigDoc::get_double(const std::string& sec, const std::string& key,
                             double fallback) const {
  auto v = find(sec, key);
  if (!v) return fallback;
  try {
    size_t pos = 0;
    double out = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("[" + sec + "] " + key + ": expected number, got '" +
                      *v + "'");
  }
}

bool ConfigDoc::get_bool(const std::string& sec, const std::string& key,
                         bool fallback) const {
  auto v = find(sec, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError("[" + sec + "] " + key + ": expected bool, got '" + *v +
                    "'");
}

std::vector<double> ConfigDoc::get_double_list(
    const std::string& sec, const std::string& key,
    const std::vector<double>& fallback) const {
  auto v = find(sec, key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_csv(*v)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("[" + sec + "] " + key + ": bad list item '" + item +
                        "'");
    }
  }
  return out;
}

std::vector<int64_t> ConfigDoc::get_int_list(
    const std::string& sec, const std::string& key,
    const std::vector<int64_t>& fallback) const {
  auto v = find(sec, key);
  if (!v) return fallback;
  std::vector<int64_t> out;
  for (const auto& item : split_csv(*v)) {
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ConfigError("[" + sec + "] " + key + ": bad list item '" + item +
                        "'");
    }
  }
  return out;
}

void ConfigDoc::set(const std::string& sec, const std::string& key,
                    const std::string& value) {
  sections_[sec].kv.emplace_back(key, value);
}

void ConfigDoc::add_row(const std::string& sec,
                        const std::vector<std::string>& row) {
  sections_[sec].rows.push_back(row);
}

std::string ConfigDoc::canonical() const {
  std::ostringstream out;
  for (const auto& [name, sec] : sections_) {
    out << "[" << name << "]\n";
    // resolve duplicate keys: keep only the effective (last) values
    std::vector<std::pair<std::string, std::string>> effective;
    for (const auto& [k, v] : sec.kv) {
      auto it = std::find_if(effective.begin(), effective.end(),
                             [&](const auto& p) { return p.first == k; });
      if (it != effective.end())
        it->second = v;
      else
        effective.emplace_back(k, v);
    }
    std::sort(effective.begin(), effective.end());
    for (const auto& [k, v] : effective) out << k << " = " << v << "\n";
    for (const auto& row : sec.rows) {
      for (size_t i = 0; i < row.size(); ++i)
        out << (i ? " " : "") << row[i];
      out << "\n";
    }
  }
  return out.str();
}

void ConfigDoc::merge_from(const ConfigDoc& other) {
  for (const auto& [name, sec] : other.sections_) {
    for (const auto& [k, v] : sec.kv) sections_[name].kv.emplace_back(k, v);
    if (!sec.rows.empty()) sections_[name].rows = sec.rows;
  }
}

uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xCBF29CE484222325ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace mhs
