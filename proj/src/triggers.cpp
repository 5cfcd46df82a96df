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

#include "tsb/triggers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsb/errors.hpp"
#include "tsb/random.hpp"

namespace tsb {
namespace {

PatchPosition position_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return {PatchAnchor::kOffset, j.get<int>()};
  if (!j.is_string()) throw ConfigError("trigger.position must be an integer or start/center/end");
  const auto s = j.get<std::string>();
  if (s == "start") return {PatchAnchor::kStart, 0};
  if (s == "center") return {PatchAnchor::kCenter, 0};
  if (s == "end") return {PatchAnchor::kEnd, 0};
  throw ConfigError("trigger.position: unknown anchor '" + s + "'");
}

nlohmann::json position_to_json(const PatchPosition& p) {
  switch (p.anchor) {
    case PatchAnchor::kStart:
      return "start";
    case PatchAnchor::kCenter:
      return "center";
    case PatchAnchor::kEnd:
      return "end";
    case PatchAnchor::kOffset:
      return p.offset;
  }
  return "end";
}

}  // namespace

std::string_view to_string(TriggerKind kind) {
  switch (kind) {
    case TriggerKind::kFixedPatch:
      return "fixed_patch";
    case TriggerKind::kRandomPatch:
      return "random_patch";
    case TriggerKind::kPowerline:
      return "powerline";
  }
  return "fixed_patch";
}

TriggerKind trigger_kind_from_string(std::string_view s) {
  if (s == "fixed_patch" || s == "fixed") return TriggerKind::kFixedPatch;
  if (s == "random_patch" || s == "random") return TriggerKind::kRandomPatch;
  if (s == "powerline") return TriggerKind::kPowerline;
  throw ConfigError("unknown trigger kind: " + std::string(s));
}

int PatchPosition::resolve(int series_length, int patch_len) const {
  if (patch_len < 1 || patch_len > series_length) {
    throw InvalidArgument("trigger patch of length " + std::to_string(patch_len) +
                          " does not fit a series of length " + std::to_string(series_length));
  }
  int start = 0;
  switch (anchor) {
    case PatchAnchor::kStart:
      start = 0;
      break;
    case PatchAnchor::kCenter:
      start = (series_length - patch_len) / 2;
      break;
    case PatchAnchor::kEnd:
      start = series_length - patch_len;
      break;
    case PatchAnchor::kOffset:
      start = offset;
      break;
  }
  if (start < 0 || start + patch_len > series_length) {
    throw InvalidArgument("trigger window [" + std::to_string(start) + ", " +
                          std::to_string(start + patch_len) + ") is out of bounds for length " +
                          std::to_string(series_length));
  }
  return start;
}

TriggerSpec TriggerSpec::powerline(int wavelength, double amplitude, bool allow_any_wavelength) {
  if (wavelength < 1) throw InvalidArgument("powerline wavelength must be positive");
  if (!allow_any_wavelength &&
      std::find(std::begin(kPowerlineWavelengths), std::end(kPowerlineWavelengths),
                wavelength) == std::end(kPowerlineWavelengths)) {
    throw InvalidArgument("powerline wavelength must be 5, 10 or 20 (got " +
                          std::to_string(wavelength) + ")");
  }
  TriggerSpec t;
  t.kind_ = TriggerKind::kPowerline;
  t.wavelength_ = wavelength;
  t.amplitude_ = amplitude;
  t.allow_any_wavelength_ = allow_any_wavelength;
  return t;
}

TriggerSpec TriggerSpec::fixed_patch(std::vector<double> pattern, PatchPosition position) {
  if (pattern.empty()) throw InvalidArgument("fixed patch pattern must not be empty");
  TriggerSpec t;
  t.kind_ = TriggerKind::kFixedPatch;
  t.position_ = position;
  t.custom_pattern_ = true;
  t.amplitude_ = 0.0;
  for (double v : pattern) t.amplitude_ = std::max(t.amplitude_, std::abs(v));
  t.pattern_ = std::move(pattern);
  return t;
}

TriggerSpec TriggerSpec::fixed_patch(int patch_len, double amplitude, PatchPosition position) {
  if (patch_len < 1) throw InvalidArgument("patch length must be positive");
  TriggerSpec t;
  t.kind_ = TriggerKind::kFixedPatch;
  t.amplitude_ = amplitude;
  t.position_ = position;
  t.pattern_.resize(static_cast<std::size_t>(patch_len));
  for (int i = 0; i < patch_len; ++i) t.pattern_[i] = (i % 4 < 2) ? amplitude : -amplitude;
  return t;
}

TriggerSpec TriggerSpec::random_patch(int patch_len, std::uint64_t seed, double amplitude,
                                      PatchPosition position) {
  if (patch_len < 1) throw InvalidArgument("patch length must be positive");
  TriggerSpec t;
  t.kind_ = TriggerKind::kRandomPatch;
  t.amplitude_ = amplitude;
  t.position_ = position;
  t.seed_ = seed;
  Rng rng(seed);
  t.pattern_.resize(static_cast<std::size_t>(patch_len));
  for (double& v : t.pattern_) v = amplitude * rng.normal();
  return t;
}

int TriggerSpec::default_patch_len(int series_length) {
  return std::max(1, static_cast<int>(std::floor(0.1 * series_length)));
}

void TriggerSpec::check_fits(int series_length) const {
  if (kind_ == TriggerKind::kPowerline) return;
  position_.resolve(series_length, patch_len());
}

nlohmann::json TriggerSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = std::string(to_string(kind_));
  j["amplitude"] = amplitude_;
  if (kind_ == TriggerKind::kPowerline) {
    j["wavelength"] = wavelength_;
    if (allow_any_wavelength_) j["allow_any_wavelength"] = true;
    return j;
  }
  j["patch_len"] = patch_len();
  j["position"] = position_to_json(position_);
  if (kind_ == TriggerKind::kRandomPatch) j["seed"] = seed_;
  if (custom_pattern_) j["pattern"] = pattern_;
  return j;
}

TriggerSpec TriggerSpec::from_json(const nlohmann::json& j, int series_length) {
  if (!j.is_object()) throw ConfigError("trigger section must be an object");
  if (!j.contains("kind")) throw ConfigError("trigger.kind is required");
  try {
    const TriggerKind kind = trigger_kind_from_string(j.at("kind").get<std::string>());
    const double amplitude = j.value("amplitude", 1.0);
    if (kind == TriggerKind::kPowerline) {
      if (!j.contains("wavelength")) throw ConfigError("trigger.wavelength is required");
      return powerline(j.at("wavelength").get<int>(), amplitude,
                       j.value("allow_any_wavelength", false));
    }
    const PatchPosition position =
        j.contains("position") ? position_from_json(j.at("position")) : PatchPosition{};
    if (kind == TriggerKind::kFixedPatch && j.contains("pattern")) {
      return fixed_patch(j.at("pattern").get<std::vector<double>>(), position);
    }
    const int patch_len = j.value("patch_len", default_patch_len(series_length));
    if (kind == TriggerKind::kFixedPatch) return fixed_patch(patch_len, amplitude, position);
    return random_patch(patch_len, j.value("seed", std::uint64_t{0}), amplitude, position);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("trigger: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("trigger: ") + e.what());
  }
}

LabeledSeries apply_trigger(const LabeledSeries& s, const TriggerSpec& trigger) {
  LabeledSeries out = s;
  out.provenance = Provenance::kTriggered;
  const int length = static_cast<int>(s.values.size());
  if (trigger.kind() == TriggerKind::kPowerline) {
    const double w = static_cast<double>(trigger.wavelength());
    for (int i = 0; i < length; ++i) {
      out.values[i] += trigger.amplitude() * std::sin(2.0 * std::numbers::pi * i / w);
    }
    return out;
  }
  const int start = trigger.position().resolve(length, trigger.patch_len());
  std::copy(trigger.pattern().begin(), trigger.pattern().end(), out.values.begin() + start);
  return out;
}

SeriesDataset poison_dataset(const SeriesDataset& d, const TriggerSpec& trigger, int target,
                             bool relabel) {
  if (target < 0 || target >= d.num_classes) {
    throw InvalidArgument("target class " + std::to_string(target) + " is not in [0, " +
                          std::to_string(d.num_classes) + ")");
  }
  SeriesDataset out = d;
  for (auto& s : out.samples) {
    s = apply_trigger(s, trigger);
    if (relabel) s.label = target;
  }
  return out;
}

}  // namespace tsb
