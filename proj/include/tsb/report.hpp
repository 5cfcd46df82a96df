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

// Result tables (attack, ablation and defense layouts share one long CSV
// schema) and the norm-difference heatmap image.

#ifndef TSB_REPORT_HPP_
#define TSB_REPORT_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsb/eval.hpp"

namespace tsb {

struct ReportRow {
  std::string table;    // "attack", "ablation" or "defense"
  std::string dataset;
  std::string model;
  std::string trigger;
  std::string setting;  // e.g. "benign", "trojaned", "w/o BN freezing", "after defense"
  double clean_accuracy = 0.0;
  std::optional<double> attack_success_rate;
  int n_clean = 0;
  int n_asr = 0;
  int seed = 0;

  bool operator==(const ReportRow&) const = default;
};

ReportRow make_row(std::string table, std::string dataset, std::string model,
                   std::string trigger, std::string setting, const EvalReport& r, int seed);

// Rates are written as percentages with one decimal,
// followed by the exact fractions.
void write_report_csv(std::span<const ReportRow> rows, const std::filesystem::path& path);
std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

// One cell block per (layer, channel); brightness scales with the value
// relative to the matrix maximum. Rows are layers.
void write_heatmap_png(const NormDifference& diff, const std::filesystem::path& path,
                       int cell_px = 12);

}  // namespace tsb

#endif  // TSB_REPORT_HPP_
