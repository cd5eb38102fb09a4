// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Plain key = value run configuration. '#' starts a comment; values may be
// comma-separated lists. CLI flags override file values by calling set().

#ifndef VIDEOJSCC_CONFIG_FILE_HPP
#define VIDEOJSCC_CONFIG_FILE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "videojscc/errors.hpp"

namespace videojscc {

class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  /// Required lookup: missing key names the field in the error.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;

  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint_or(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_double_list_or(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> get_uint_list_or(const std::string& key, const std::vector<std::uint64_t>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

}  // namespace videojscc

#endif  // VIDEOJSCC_CONFIG_FILE_HPP
