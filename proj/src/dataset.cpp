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

#include "tsb/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tsb/errors.hpp"

namespace tsb {
namespace {

constexpr double kStdFloor = 1e-8;

bool is_separator(char c) { return c == '\t' || c == ',' || c == ' ' || c == '\r'; }

std::vector<double> parse_fields(std::string_view line, std::size_t line_no) {
  std::vector<double> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_separator(line[i])) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && !is_separator(line[j])) ++j;
    const std::string_view tok = line.substr(i, j - i);
    if (tok.find(':') != std::string_view::npos) {
      throw ParseError("multivariate or annotated series are not supported", line_no);
    }
    double v = 0.0;
    const char* first = tok.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw ParseError("cannot parse number '" + std::string(tok) + "'", line_no);
    }
    if (!std::isfinite(v)) throw ParseError("non-finite value", line_no);
    fields.push_back(v);
    i = j;
  }
  return fields;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kClean:
      return "clean";
    case Provenance::kAdversarial:
      return "adversarial";
    case Provenance::kTriggered:
      return "triggered";
  }
  return "clean";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "clean") return Provenance::kClean;
  if (s == "adversarial") return Provenance::kAdversarial;
  if (s == "triggered") return Provenance::kTriggered;
  throw InvalidArgument("unknown provenance: " + std::string(s));
}

void SeriesDataset::validate() const {
  if (num_classes < 2) throw InvalidDataset(name + ": need at least two classes");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (static_cast<int>(s.values.size()) != series_length) {
      throw InvalidDataset(name + ": sample " + std::to_string(i) + " has length " +
                           std::to_string(s.values.size()) + ", expected " +
                           std::to_string(series_length));
    }
    if (s.label < 0 || s.label >= num_classes) {
      throw InvalidDataset(name + ": sample " + std::to_string(i) + " label out of range");
    }
    for (double v : s.values) {
      if (!std::isfinite(v)) throw InvalidDataset(name + ": non-finite value");
    }
  }
}

std::vector<std::vector<double>> SeriesDataset::values() const {
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.values);
  return out;
}

std::vector<int> SeriesDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

SeriesDataset parse_ucr(std::istream& in, const std::string& name,
                        const UcrLoadOptions& options) {
  std::vector<std::pair<double, std::vector<double>>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = parse_fields(line, line_no);
    if (fields.empty()) continue;
    if (fields.size() < 3) throw ParseError("a row needs a label and at least two values", line_no);
    if (expected == 0) {
      expected = fields.size();
    } else if (fields.size() != expected) {
      throw ParseError("row has " + std::to_string(fields.size() - 1) + " values, expected " +
                           std::to_string(expected - 1),
                       line_no);
    }
    const double label = fields.front();
    fields.erase(fields.begin());
    rows.emplace_back(label, std::move(fields));
  }
  if (rows.empty()) throw InvalidDataset(name + ": no samples");

  std::vector<double> classes;
  if (options.class_labels) {
    classes = *options.class_labels;
  } else {
    for (const auto& r : rows) classes.push_back(r.first);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  }
  if (classes.size() < 2) throw InvalidDataset(name + ": single-class file");

  SeriesDataset d;
  d.name = name;
  d.num_classes = static_cast<int>(classes.size());
  d.series_length = static_cast<int>(expected - 1);
  d.class_labels = classes;
  d.samples.reserve(rows.size());
  for (auto& [label, values] : rows) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) {
      throw InvalidDataset(name + ": label " + std::to_string(label) +
                           " is not in the provided class mapping");
    }
    LabeledSeries s{std::move(values), static_cast<int>(it - classes.begin()),
                    Provenance::kClean};
    d.samples.push_back(options.znormalize ? znormalize(s) : std::move(s));
  }
  return d;
}

SeriesDataset load_ucr(const std::filesystem::path& path, const UcrLoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open dataset file: " + path.string());
  return parse_ucr(in, path.stem().string(), options);
}

void write_ucr(const SeriesDataset& dataset, std::ostream& out) {
  out << std::setprecision(17);
  for (const auto& s : dataset.samples) {
    const double label = dataset.class_labels.empty()
                             ? static_cast<double>(s.label)
                             : dataset.class_labels.at(static_cast<std::size_t>(s.label));
    out << label;
    for (double v : s.values) out << '\t' << v;
    out << '\n';
  }
}

void save_ucr(const SeriesDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write dataset file: " + path.string());
  write_ucr(dataset, out);
}

LabeledSeries resize_series(const LabeledSeries& s, int target_length) {
  if (target_length < 2) throw InvalidArgument("resize target length must be at least 2");
  const int n = static_cast<int>(s.values.size());
  if (n < 2) throw InvalidArgument("cannot resize a series shorter than 2");
  LabeledSeries out{std::vector<double>(static_cast<std::size_t>(target_length)), s.label,
                    s.provenance};
  if (n == target_length) {
    out.values = s.values;
    return out;
  }
  const double span = static_cast<double>(n - 1);
  for (int k = 0; k < target_length; ++k) {
    // Position k / (target - 1) on [0, 1] maps to source index pos.
    const double pos = span * k / (target_length - 1);
    int i = static_cast<int>(std::floor(pos));
    if (i >= n - 1) i = n - 2;
    const double frac = pos - i;
    const double a = s.values[i];
    const double b = s.values[i + 1];
    const double v = frac == 0.0 ? a : a + (b - a) * frac;
    out.values[k] = std::clamp(v, std::min(a, b), std::max(a, b));
  }
  out.values.front() = s.values.front();
  out.values.back() = s.values.back();
  return out;
}

SeriesDataset resize_dataset(const SeriesDataset& d, int target_length) {
  SeriesDataset out = d;
  out.series_length = target_length;
  for (auto& s : out.samples) s = resize_series(s, target_length);
  return out;
}

LabeledSeries znormalize(const LabeledSeries& s) {
  LabeledSeries out = s;
  if (s.values.empty()) return out;
  double mean = 0.0;
  for (double v : s.values) mean += v;
  mean /= static_cast<double>(s.values.size());
  double var = 0.0;
  for (double v : s.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(s.values.size());
  const double sd = std::sqrt(var);
  if (sd < kStdFloor) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (double& v : out.values) v = (v - mean) / sd;
  return out;
}

}  // namespace tsb
