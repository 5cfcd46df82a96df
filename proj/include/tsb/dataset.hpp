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

#ifndef TSB_DATASET_HPP_
#define TSB_DATASET_HPP_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tsb {

enum class Provenance { kClean, kAdversarial, kTriggered };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct LabeledSeries {
  std::vector<double> values;
  int label = 0;
  Provenance provenance = Provenance::kClean;
};

struct SeriesDataset {
  std::string name;
  int num_classes = 0;
  int series_length = 0;
  std::vector<LabeledSeries> samples;
  // Original label value of each contiguous class id, ascending.
  std::vector<double> class_labels;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  // Throws InvalidDataset if lengths, labels or values break the invariants.
  void validate() const;
  std::vector<std::vector<double>> values() const;
  std::vector<int> labels() const;
};

struct UcrLoadOptions {
  bool znormalize = true;
  // Reuse another split's label mapping so that train and test ids agree.
  std::optional<std::vector<double>> class_labels;
};

// UCR text format: one series per line, class label first, then the values,
// separated by tabs, commas or spaces. Labels are remapped to [0, K) in
// ascending order of their original value.
SeriesDataset load_ucr(const std::filesystem::path& path, const UcrLoadOptions& options = {});
SeriesDataset parse_ucr(std::istream& in, const std::string& name,
                        const UcrLoadOptions& options = {});

// Writes the same format back, with original label values and round-trip
// precision.
void save_ucr(const SeriesDataset& dataset, const std::filesystem::path& path);
void write_ucr(const SeriesDataset& dataset, std::ostream& out);

// Linear interpolation on the normalized grid [0, 1]. Endpoints are kept.
LabeledSeries resize_series(const LabeledSeries& s, int target_length);
SeriesDataset resize_dataset(const SeriesDataset& d, int target_length);

// Zero mean, unit population standard deviation; constant series become 0.
LabeledSeries znormalize(const LabeledSeries& s);

}  // namespace tsb

#endif  // TSB_DATASET_HPP_
