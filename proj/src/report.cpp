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

#include "tsb/report.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>

#include "tsb/errors.hpp"
#include "tsb/table.hpp"

namespace tsb {

namespace {

const std::vector<std::string> kHeader{"table",   "dataset",     "model",       "trigger",
                                       "setting", "seed",        "ca_percent",  "asr_percent",
                                       "ca",      "asr",         "n_clean",     "n_asr"};

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

// "hot" ramp: black -> red -> yellow -> white.
void heat(double v, unsigned char* rgb) {
  const auto ch = [](double x) {
    return static_cast<unsigned char>(255.0 * std::clamp(x, 0.0, 1.0) + 0.5);
  };
  rgb[0] = ch(3.0 * v);
  rgb[1] = ch(3.0 * v - 1.0);
  rgb[2] = ch(3.0 * v - 2.0);
}

}  // namespace

ReportRow make_row(std::string table, std::string dataset, std::string model,
                   std::string trigger, std::string setting, const EvalReport& r, int seed) {
  return ReportRow{std::move(table),   std::move(dataset), std::move(model),
                   std::move(trigger), std::move(setting), r.clean_accuracy,
                   r.attack_success_rate, r.n_clean_eval,  r.n_asr_eval,
                   seed};
}

void write_report_csv(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  CsvWriter csv(path, kHeader);
  for (const auto& r : rows) {
    csv.field(r.table).field(r.dataset).field(r.model).field(r.trigger).field(r.setting);
    csv.field(r.seed).field(percent(r.clean_accuracy));
    csv.field(r.attack_success_rate ? percent(*r.attack_success_rate) : std::string());
    csv.field(r.clean_accuracy);
    if (r.attack_success_rate) {
      csv.field(*r.attack_success_rate);
    } else {
      csv.field(std::string_view());
    }
    csv.field(r.n_clean).field(r.n_asr).end_row();
  }
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header != kHeader) throw ParseError("not a report table: " + path.string(), 1);
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& c = t.rows[i];
    const std::size_t line = i + 2;
    ReportRow r;
    r.table = c[0];
    r.dataset = c[1];
    r.model = c[2];
    r.trigger = c[3];
    r.setting = c[4];
    r.seed = static_cast<int>(parse_double(c[5], line));
    r.clean_accuracy = parse_double(c[8], line);
    if (!c[9].empty()) r.attack_success_rate = parse_double(c[9], line);
    r.n_clean = static_cast<int>(parse_double(c[10], line));
    r.n_asr = static_cast<int>(parse_double(c[11], line));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_heatmap_png(const NormDifference& diff, const std::filesystem::path& path,
                       int cell_px) {
  if (diff.values.empty()) throw InvalidArgument("heatmap: empty matrix");
  if (cell_px < 1) throw InvalidArgument("heatmap: cell size must be positive");
  std::size_t cols = 0;
  double peak = 0.0;
  for (const auto& row : diff.values) {
    cols = std::max(cols, row.size());
    for (double v : row) peak = std::max(peak, v);
  }
  if (cols == 0) throw InvalidArgument("heatmap: rows have no channels");
  const int width = static_cast<int>(cols) * cell_px;
  const int height = static_cast<int>(diff.values.size()) * cell_px;
  // Cells beyond a layer's channel count stay mid grey.
  std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height * 3, 128);
  for (std::size_t l = 0; l < diff.values.size(); ++l) {
    for (std::size_t c = 0; c < diff.values[l].size(); ++c) {
      unsigned char rgb[3];
      heat(peak > 0.0 ? diff.values[l][c] / peak : 0.0, rgb);
      for (int y = 0; y < cell_px; ++y) {
        for (int x = 0; x < cell_px; ++x) {
          const std::size_t at =
              ((l * cell_px + y) * static_cast<std::size_t>(width) + c * cell_px + x) * 3;
          std::copy(rgb, rgb + 3, pixels.begin() + static_cast<std::ptrdiff_t>(at));
        }
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error("cannot write " + path.string() + ": " + msg);
  }
}

}  // namespace tsb
