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

#ifndef TSB_TRIGGERS_HPP_
#define TSB_TRIGGERS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tsb/dataset.hpp"

namespace tsb {

enum class TriggerKind { kFixedPatch, kRandomPatch, kPowerline };

std::string_view to_string(TriggerKind kind);
TriggerKind trigger_kind_from_string(std::string_view s);

enum class PatchAnchor { kStart, kCenter, kEnd, kOffset };

struct PatchPosition {
  PatchAnchor anchor = PatchAnchor::kEnd;
  int offset = 0;  // used with kOffset only

  // First index of the window; throws InvalidArgument if it does not fit.
  int resolve(int series_length, int patch_len) const;
  bool operator==(const PatchPosition&) const = default;
};

// Wavelengths of the powerline trigger family.
inline constexpr int kPowerlineWavelengths[] = {5, 10, 20};

// An immutable trigger transform. Patch kinds carry their concrete pattern,
// resolved once at construction; random patterns are drawn from the seed
// here and reused verbatim on every application.
class TriggerSpec {
 public:
  // amplitude * sin(2*pi*i / wavelength) added over the whole series.
  static TriggerSpec powerline(int wavelength, double amplitude = 1.0,
                               bool allow_any_wavelength = false);
  // Replaces the window with `pattern`.
  static TriggerSpec fixed_patch(std::vector<double> pattern, PatchPosition position = {});
  // Built-in fixed pattern: a square wave of period 4 at +/- amplitude.
  static TriggerSpec fixed_patch(int patch_len, double amplitude = 1.0,
                                 PatchPosition position = {});
  // Replaces the window with amplitude * N(0, 1) draws fixed by seed.
  static TriggerSpec random_patch(int patch_len, std::uint64_t seed, double amplitude = 1.0,
                                  PatchPosition position = {});

  // max(1, floor(0.1 * L)).
  static int default_patch_len(int series_length);

  TriggerKind kind() const { return kind_; }
  int wavelength() const { return wavelength_; }
  double amplitude() const { return amplitude_; }
  int patch_len() const { return static_cast<int>(pattern_.size()); }
  const PatchPosition& position() const { return position_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& pattern() const { return pattern_; }
  bool allow_any_wavelength() const { return allow_any_wavelength_; }

  // Checks that the trigger can be applied to series of this length.
  void check_fits(int series_length) const;

  nlohmann::json to_json() const;
  // Missing patch_len defaults from series_length.
  static TriggerSpec from_json(const nlohmann::json& j, int series_length);

  bool operator==(const TriggerSpec&) const = default;

 private:
  TriggerSpec() = default;

  TriggerKind kind_ = TriggerKind::kFixedPatch;
  int wavelength_ = 0;
  double amplitude_ = 1.0;
  PatchPosition position_;
  std::uint64_t seed_ = 0;
  bool allow_any_wavelength_ = false;
  bool custom_pattern_ = false;
  std::vector<double> pattern_;
};

// Applies the trigger; the label is left as is, provenance becomes triggered.
LabeledSeries apply_trigger(const LabeledSeries& s, const TriggerSpec& trigger);

// Triggers every sample. With relabel, every label becomes target.
SeriesDataset poison_dataset(const SeriesDataset& d, const TriggerSpec& trigger, int target,
                             bool relabel);

}  // namespace tsb

#endif  // TSB_TRIGGERS_HPP_
