/*
 * Copyright 2026 The tsbackdoor Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Plain CSV and JSON file helpers. Doubles are written in the shortest form
// that parses back to the same value, so output is byte-stable.

#ifndef TSB_TABLE_HPP_
#define TSB_TABLE_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tsb/errors.hpp"

namespace tsb {

std::string format_double(double v);
// Throws ParseError carrying `line`.
double parse_double(std::string_view s, std::size_t line);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  CsvWriter& field(double v);
  CsvWriter& field(int v);
  CsvWriter& field(long long v);
  CsvWriter& field(std::size_t v);
  // Quoted when it contains a separator, quote or newline.
  CsvWriter& field(std::string_view v);
  CsvWriter& field(const char* v) { return field(std::string_view(v)); }
  void end_row();

 private:
  void separator();

  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Simple CSV without embedded newlines. Ragged rows throw ParseError.
CsvTable read_csv(const std::filesystem::path& path);

// Pretty-printed with a trailing newline; parent directories are created.
void write_json(const nlohmann::json& j, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

// Overwrites `value` with j[key] when present. A value of the wrong type
// throws ConfigError naming "section.key".
template <class T>
void read_field(const nlohmann::json& j, std::string_view section, const char* key, T& value) {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  const char* expected = nullptr;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) expected = "a boolean";
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) expected = "a non-negative integer";
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) expected = "an integer";
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) expected = "a number";
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) expected = "a string";
  }
  if (expected == nullptr) {
    try {
      value = v.get<T>();
      return;
    } catch (const nlohmann::json::exception&) {
      expected = "a value of the right type";
    }
  }
  throw ConfigError(std::string(section) + "." + key + ": expected " + expected);
}

}  // namespace tsb

#endif  // TSB_TABLE_HPP_
