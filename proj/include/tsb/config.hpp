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

// Run configuration: one JSON file with data, model, train, trigger, attack,
// defense and evaluation sections. Relative paths resolve against the file's
// directory.

#ifndef TSB_CONFIG_HPP_
#define TSB_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "tsb/attack.hpp"
#include "tsb/dataset.hpp"
#include "tsb/defense.hpp"
#include "tsb/eval.hpp"
#include "tsb/models.hpp"
#include "tsb/triggers.hpp"

namespace tsb {

struct DataConfig {
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path external;  // D'
  bool znormalize = true;
};

struct RunConfig {
  DataConfig data;
  // Resolved against the data's class count and length by load_scenario().
  nlohmann::json model = nlohmann::json::object();
  TrainConfig train;
  nlohmann::json trigger = {{"kind", "fixed"}};
  AttackConfig attack;
  DefenseConfig defense;
  double poison_ratio = 0.1;  // triggered share of the defender's data
  bool asr_include_target = false;
  std::filesystem::path output_dir = "runs";
  // Optional overrides of the stage checkpoints under output_dir.
  std::optional<std::filesystem::path> benign_checkpoint;
  std::optional<std::filesystem::path> trojaned_checkpoint;
  std::uint64_t seed = 0;

  // Field-level ConfigError on bad values or missing files.
  static RunConfig from_json(const nlohmann::json& j,
                             const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // Sets the run seed and every section seed to `seed`.
  void apply_seed(std::uint64_t seed);

  std::filesystem::path stage_dir(const std::string& stage) const { return output_dir / stage; }
  std::filesystem::path benign_path() const;
  std::filesystem::path trojaned_path() const;
};

struct Scenario {
  SeriesDataset train;
  SeriesDataset test;
  SeriesDataset external;
  ModelOptions model;
  TriggerSpec trigger;
};

// Reads the datasets and resolves model options and trigger. The external
// set is loaded as is; resizing happens in the attack.
Scenario load_scenario(const RunConfig& cfg);

}  // namespace tsb

#endif  // TSB_CONFIG_HPP_
