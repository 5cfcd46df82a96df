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

// Clean accuracy, attack success rate, benign training, channel-norm
// difference maps and feature export.

#ifndef TSB_EVAL_HPP_
#define TSB_EVAL_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsb/dataset.hpp"
#include "tsb/models.hpp"
#include "tsb/triggers.hpp"

namespace tsb {

// Eval-mode argmax for every sample, batched.
std::vector<int> predict_all(const ModelHandle& m, const SeriesDataset& d);

// Throws InvalidDataset on an empty set or a length mismatch.
double clean_accuracy(const ModelHandle& m, const SeriesDataset& d);
// Accuracy within each class id; NaN for classes without samples.
std::vector<double> per_class_accuracy(const ModelHandle& m, const SeriesDataset& d);

// Samples counted by the success rate: true label != target unless
// include_target.
int asr_denominator(const SeriesDataset& d, int target, bool include_target = false);
// Fraction of triggered samples classified as target. Throws InvalidDataset
// when the denominator is empty.
double attack_success_rate(const ModelHandle& m, const SeriesDataset& d,
                           const TriggerSpec& trigger, int target,
                           bool include_target = false);

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 1e-3;
  int batch_size = 16;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  bool operator==(const TrainConfig&) const = default;
};

struct TrainEpoch {
  int epoch = 0;
  double loss = 0.0;           // mean training cross-entropy
  double test_accuracy = 0.0;  // after the epoch
};

struct TrainResult {
  ModelHandle last;
  ModelHandle best;  // highest test accuracy, earliest on ties
  int best_epoch = 0;
  double best_accuracy = 0.0;
  std::vector<TrainEpoch> history;
};

// Supervised cross-entropy training from the options' seeded init. With a
// non-empty out_dir, writes last.ckpt, best.ckpt, train_log.csv and
// train_manifest.json. Non-finite loss throws TrainingError.
TrainResult train_benign(const ModelOptions& options, const SeriesDataset& train,
                         const SeriesDataset& test, const TrainConfig& cfg,
                         const std::filesystem::path& out_dir = {},
                         const std::function<void(const TrainEpoch&)>& on_epoch = {});

// Per layer, per channel |mean norm over bd - mean norm over clean|.
struct NormDifference {
  std::vector<std::string> layers;
  std::vector<std::vector<double>> values;  // values[layer][channel]

  double layer_mean(std::size_t layer) const;
};

// Throws InvalidDataset when either set is empty.
NormDifference norm_difference_matrix(const ModelHandle& m,
                                      const std::vector<std::string>& probe_layers,
                                      const SeriesDataset& clean, const SeriesDataset& bd);
// Long format: layer, channel, value.
void write_norm_difference_csv(const NormDifference& diff, const std::filesystem::path& path);

// index, label, provenance, f_0..f_{F-1}.
void export_features(const ModelHandle& m, const SeriesDataset& d,
                     const std::filesystem::path& path);

struct EvalReport {
  double clean_accuracy = 0.0;
  std::optional<double> attack_success_rate;
  std::vector<double> per_class_accuracy;
  int n_clean_eval = 0;
  int n_asr_eval = 0;
  std::optional<NormDifference> norm_diff;
  nlohmann::json manifest = nlohmann::json::object();

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// CA always; ASR when a trigger is given.
EvalReport evaluate(const ModelHandle& m, const SeriesDataset& test,
                    const std::optional<TriggerSpec>& trigger, int target,
                    bool include_target = false);

}  // namespace tsb

#endif  // TSB_EVAL_HPP_
