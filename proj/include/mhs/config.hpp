#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mhs/errors.hpp"

namespace mhs {

// Plain sectioned text document:
//
//   [section]
//   key = value
//   bare row with whitespace-separated fields
//
// Full-line comments start with '#' or ';'. Key/value pairs and bare rows
// may be mixed inside a section; rows keep their order. This one format
// carries both the main config ([env], [heuristics], [train], [eval]) and
// the topology layout schema ([loops], [nodes], [segments], [junctions],
// [limits]).
class ConfigDoc {
 public:
  struct Section {
    std::vector<std::pair<std::string, std::string>> kv;
    std::vector<std::vector<std::string>> rows;
  };

  static ConfigDoc parse(const std::string& text);
  static ConfigDoc parse_file(const std::string& path);

  bool has_section(const std::string& name) const;
  const Section& section(const std::string& name) const;

  bool has_key(const std::string& sec, const std::string& key) const;

  std::string get_string(const std::string& sec, const std::string& key,
                         const std::string& fallback) const;
  int64_t get_int(const std::string& sec, const std::string& key,
                  int64_t fallback) const;
  double get_double(const std::string& sec, const std::string& key,
                    double fallback) const;
  bool get_bool(const std::string& sec, const std::string& key,
                bool fallback) const;
  std::vector<double> get_double_list(const std::string& sec,
                                      const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<int64_t> get_int_list(const std::string& sec,
                                    const std::string& key,
                                    const std::vector<int64_t>& fallback) const;

  void set(const std::string& sec, const std::string& key,
           const std::string& value);
  void add_row(const std::string& sec, const std::vector<std::string>& row);

  // Sections sorted by name, keys in insertion order, rows in order.
  // Hashing this gives the config hash used in reports and manifests.
  std::string canonical() const;

  // Overlay: other's keys replace ours, other's rows replace whole sections.
  void merge_from(const ConfigDoc& other);

 private:
  std::optional<std::string> find(const std::string& sec,
                                  const std::string& key) const;
  std::map<std::string, Section> sections_;
};

uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);

std::vector<std::string> split_ws(const std::string& line);
std::vector<std::string> split_csv(const std::string& value);

}  // namespace mhs
