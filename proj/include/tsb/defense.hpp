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

// Backdoor removal: score samples by the channel norms of the rear feature
// layers, isolate the highest-scoring r% as toxic, then fine-tune on the
// clean part while pushing the toxic part away from its labels.

#ifndef TSB_DEFENSE_HPP_
#define TSB_DEFENSE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsb/dataset.hpp"
#include "tsb/models.hpp"
#include "tsb/triggers.hpp"

namespace tsb {

struct DefenseConfig {
  double r_percent = 5.0;
  double alpha_start = 10.0;
  double alpha_end = 1.0;
  int epochs = 20;
  double learning_rate = 1e-3;
  int batch_size = 16;
  // Norm bound on the alpha-weighted toxic gradient.
  double toxic_grad_clip = 5.0;
  // Empty: the model's default probe layers.
  std::vector<std::string> probe_layers;
  std::uint64_t seed = 0;

  // Throws InvalidArgument.
  void validate() const;
  nlohmann::json to_json() const;
  // Missing fields keep their defaults; bad values throw ConfigError.
  static DefenseConfig from_json(const nlohmann::json& j);
  bool operator==(const DefenseConfig&) const = default;
};

// Sum over probe layers of the L2 norm of the layer's channel-norm vector.
std::vector<double> score_samples(const ModelHandle& m, const SeriesDataset& d,
                                  const std::vector<std::string>& probe_layers);

// ceil(r * n / 100), at most n.
std::size_t toxic_count(std::size_t n, double r_percent);

struct IsolationResult {
  SeriesDataset toxic;
  SeriesDataset clean;
  std::vector<double> scores;               // per input sample
  std::vector<std::size_t> toxic_indices;   // rank order
  std::vector<std::size_t> clean_indices;   // ascending
};

// Descending by score, ties by index ascending; the first toxic_count()
// samples are toxic.
IsolationResult isolate(std::span<const double> scores, const SeriesDataset& d,
                        double r_percent);

// Linear from alpha_start at epoch 0 to alpha_end at epoch E-1.
double alpha_at(const DefenseConfig& cfg, int epoch);

struct DefenseEpoch {
  int epoch = 0;
  double alpha = 0.0;
  double clean_loss = 0.0;  // mean CE on clean batches
  double toxic_loss = 0.0;  // mean CE on toxic batches
};

// Each clean batch is paired with the next toxic batch, cycling through the
// toxic set. Batch norm follows the model's freeze flag. An empty toxic set
// degrades to plain fine-tuning; an empty clean set throws InvalidDataset.
// Non-finite loss throws DefenseError.
ModelHandle unlearn(const ModelHandle& m, const IsolationResult& iso, const DefenseConfig& cfg,
                    const std::function<void(const DefenseEpoch&)>& on_epoch = {});

// index, score, rank, partition, provenance.
void write_isolation_csv(const IsolationResult& iso, const SeriesDataset& d,
                         const std::filesystem::path& path);

// Copy of `train` with round(ratio * N) samples of classes other than
// `target` (chosen by seed) triggered and relabelled to `target`.
SeriesDataset build_defense_scenario(const SeriesDataset& train, const TriggerSpec& trigger,
                                     int target, double poison_ratio = 0.1,
                                     std::uint64_t seed = 0);

struct DefenseResult {
  ModelHandle sanitized;
  IsolationResult isolation;
};

// score -> isolate -> unlearn. With a non-empty out_dir, writes
// sanitized.ckpt, isolation.csv and defense_manifest.json.
DefenseResult run_defense(const ModelHandle& m, const SeriesDataset& d, const DefenseConfig& cfg,
                          const std::filesystem::path& out_dir = {},
                          const std::function<void(const DefenseEpoch&)>& on_epoch = {});

}  // namespace tsb

#endif  // TSB_DEFENSE_HPP_
