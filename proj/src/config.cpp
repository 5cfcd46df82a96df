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

#include "tsb/config.hpp"

#include "tsb/errors.hpp"
#include "tsb/table.hpp"

namespace tsb {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

fs::path existing_file(const nlohmann::json& section, const char* key, const fs::path& base,
                       const std::string& field) {
  if (!section.contains(key)) throw ConfigError(field + ": required");
  if (!section.at(key).is_string()) throw ConfigError(field + ": expected a path string");
  const fs::path p = resolve(base, section.at(key).get<std::string>());
  if (!fs::is_regular_file(p)) throw ConfigError(field + ": file not found: " + p.string());
  return p;
}

nlohmann::json section(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return nlohmann::json::object();
  if (!j.at(key).is_object()) throw ConfigError(std::string(key) + ": expected an object");
  return j.at(key);
}

// Sections without their own seed inherit the run seed.
nlohmann::json with_seed(nlohmann::json s, std::uint64_t seed) {
  if (!s.contains("seed")) s["seed"] = seed;
  return s;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const char* const kKnown[] = {"data",    "model",   "train",        "trigger",
                                       "attack",  "defense", "poison_ratio", "evaluation",
                                       "output_dir", "checkpoints", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw ConfigError(key + ": unknown section");
    }
  }
  RunConfig c;
  if (j.contains("seed") && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) {
    throw ConfigError("seed: expected a non-negative integer");
  }
  c.seed = j.value("seed", std::uint64_t{0});

  const auto data = section(j, "data");
  c.data.train = existing_file(data, "train", base_dir, "data.train");
  c.data.test = existing_file(data, "test", base_dir, "data.test");
  if (data.contains("external")) {
    c.data.external = existing_file(data, "external", base_dir, "data.external");
  }
  if (data.contains("znormalize")) {
    if (!data["znormalize"].is_boolean()) throw ConfigError("data.znormalize: expected a boolean");
    c.data.znormalize = data["znormalize"].get<bool>();
  }

  c.model = with_seed(section(j, "model"), c.seed);
  if (c.model.contains("architecture")) {
    try {
      architecture_from_string(c.model.at("architecture").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model.architecture: ") + e.what());
    }
  }
  c.train = TrainConfig::from_json(with_seed(section(j, "train"), c.seed));
  if (j.contains("trigger")) {
    c.trigger = section(j, "trigger");
    if (!c.trigger.contains("kind")) throw ConfigError("trigger.kind: required");
  }
  c.attack = AttackConfig::from_json(with_seed(section(j, "attack"), c.seed));
  c.defense = DefenseConfig::from_json(with_seed(section(j, "defense"), c.seed));

  if (j.contains("poison_ratio")) {
    if (!j["poison_ratio"].is_number()) throw ConfigError("poison_ratio: expected a number");
    c.poison_ratio = j["poison_ratio"].get<double>();
    if (!(c.poison_ratio > 0.0 && c.poison_ratio <= 1.0)) {
      throw ConfigError("poison_ratio: must be in (0, 1]");
    }
  }
  const auto evaluation = section(j, "evaluation");
  if (evaluation.contains("asr_include_target")) {
    if (!evaluation["asr_include_target"].is_boolean()) {
      throw ConfigError("evaluation.asr_include_target: expected a boolean");
    }
    c.asr_include_target = evaluation["asr_include_target"].get<bool>();
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("output_dir: expected a path string");
    c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
  } else {
    c.output_dir = resolve(base_dir, "runs");
  }
  const auto ckpt = section(j, "checkpoints");
  if (ckpt.contains("benign")) {
    c.benign_checkpoint = existing_file(ckpt, "benign", base_dir, "checkpoints.benign");
  }
  if (ckpt.contains("trojaned")) {
    c.trojaned_checkpoint = existing_file(ckpt, "trojaned", base_dir, "checkpoints.trojaned");
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  return from_json(read_json(path), path.parent_path());
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j{
      {"data",
       {{"train", data.train.string()},
        {"test", data.test.string()},
        {"znormalize", data.znormalize}}},
      {"model", model},
      {"train", train.to_json()},
      {"trigger", trigger},
      {"attack", attack.to_json()},
      {"defense", defense.to_json()},
      {"poison_ratio", poison_ratio},
      {"evaluation", {{"asr_include_target", asr_include_target}}},
      {"output_dir", output_dir.string()},
      {"seed", seed}};
  if (!data.external.empty()) j["data"]["external"] = data.external.string();
  if (benign_checkpoint) j["checkpoints"]["benign"] = benign_checkpoint->string();
  if (trojaned_checkpoint) j["checkpoints"]["trojaned"] = trojaned_checkpoint->string();
  return j;
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  model["seed"] = s;
  train.seed = s;
  attack.seed = s;
  defense.seed = s;
}

fs::path RunConfig::benign_path() const {
  return benign_checkpoint ? *benign_checkpoint : stage_dir("benign") / "last.ckpt";
}

fs::path RunConfig::trojaned_path() const {
  return trojaned_checkpoint ? *trojaned_checkpoint : stage_dir("attack") / "trojaned.ckpt";
}

Scenario load_scenario(const RunConfig& cfg) {
  UcrLoadOptions opts;
  opts.znormalize = cfg.data.znormalize;
  SeriesDataset train = load_ucr(cfg.data.train, opts);
  opts.class_labels = train.class_labels;
  SeriesDataset test = load_ucr(cfg.data.test, opts);
  if (test.series_length != train.series_length) {
    throw ConfigError("data.test: series length differs from data.train");
  }
  SeriesDataset external;
  if (!cfg.data.external.empty()) {
    UcrLoadOptions ext_opts;
    ext_opts.znormalize = cfg.data.znormalize;
    external = load_ucr(cfg.data.external, ext_opts);
  }
  ModelOptions model = ModelOptions::from_json(cfg.model, train.num_classes, train.series_length);
  TriggerSpec trigger = TriggerSpec::from_json(cfg.trigger, train.series_length);
  try {
    cfg.attack.validate(train.num_classes);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("attack.") + e.what());
  }
  return Scenario{std::move(train), std::move(test), std::move(external), model, trigger};
}

}  // namespace tsb
