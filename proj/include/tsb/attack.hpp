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

// Data-free trojan insertion: adversarial pseudo-samples are synthesized
// from an unrelated dataset by targeted PGD against the benign model, then
// the model is fine-tuned to keep its logits on those samples while mapping
// their triggered copies to the target class.

#ifndef TSB_ATTACK_HPP_
#define TSB_ATTACK_HPP_

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

enum class OptimizerKind { kAdam };

struct AttackConfig {
  int pgd_steps = 50;
  double pgd_step_size = 0.01;
  double lambda = 1.0;
  int epochs = 1000;
  double learning_rate = 1e-4;
  int batch_size = 16;
  int target_class = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  bool keep_failed_adversarials = false;
  // Ablation switches; all true is the full method.
  bool bn_freeze = true;
  bool logits_alignment = true;
  bool use_adv_synthesis = true;
  // Drives the per-epoch shuffle.
  std::uint64_t seed = 0;

  // Throws InvalidArgument.
  void validate(int num_classes) const;
  nlohmann::json to_json() const;
  // Missing fields keep their defaults; bad values throw ConfigError.
  static AttackConfig from_json(const nlohmann::json& j);
  bool operator==(const AttackConfig&) const = default;
};

struct SynthesisRecord {
  std::vector<double> x_adv;
  std::vector<double> y_adv_logits;  // benign logits of x_adv
  int target_class = 0;
  bool attack_succeeded = false;
  int source_index = 0;  // row of the external dataset

  // Class the record stands for: the target when the attack succeeded,
  // otherwise the benign prediction.
  int pseudo_label() const;
};

// Gradient of the summed cross-entropy w.r.t. a (N, 1, L) batch.
using InputGradientFn = std::function<nn::Tensor(const nn::Tensor&, std::span<const int>)>;

// x <- x - step_size * sign(grad_x CE(f(x), target)), no projection.
nn::Tensor targeted_pgd(const InputGradientFn& gradient, const nn::Tensor& batch,
                        std::span<const int> targets, int steps, double step_size);
std::vector<double> targeted_pgd(const ModelHandle& m, std::span<const double> x, int target,
                                 int steps, double step_size);
// Batched form; each row moves independently.
nn::Tensor targeted_pgd(const ModelHandle& m, const nn::Tensor& batch,
                        std::span<const int> targets, int steps, double step_size);

// One record per (sample, class) pair in sample-major order. The external
// dataset must already have the model's input length. Failed records are
// dropped unless cfg.keep_failed_adversarials.
std::vector<SynthesisRecord> synthesize_pseudo_dataset(const ModelHandle& benign,
                                                       const SeriesDataset& external,
                                                       const AttackConfig& cfg);

// Raw external samples with benign logits as targets, for the ablation
// without adversarial synthesis.
std::vector<SynthesisRecord> raw_pseudo_dataset(const ModelHandle& benign,
                                                const SeriesDataset& external);

struct EpochStats {
  int epoch = 0;
  double alignment_loss = 0.0;  // MSE, or CE on x_adv without alignment
  double backdoor_loss = 0.0;   // CE of triggered samples to the target
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Fine-tunes a copy of the benign model. Returns the last-epoch model.
ModelHandle trojan_train(const ModelHandle& benign, std::span<const SynthesisRecord> records,
                         const TriggerSpec& trigger, const AttackConfig& cfg,
                         const EpochCallback& on_epoch = {});

// Columnar archive: index, source_index, target_class, attack_succeeded,
// logit_0..logit_{K-1}, x_0..x_{L-1}.
void save_synthesis_archive(std::span<const SynthesisRecord> records,
                            const std::filesystem::path& path);
std::vector<SynthesisRecord> load_synthesis_archive(const std::filesystem::path& path);

struct AttackResult {
  ModelHandle trojaned;
  std::vector<SynthesisRecord> records;  // as used for training
  int attempted = 0;                     // |external| * K with synthesis
  int succeeded = 0;
};

// resize -> synthesize (or raw) -> trojan_train. When out_dir is non-empty,
// writes trojaned.ckpt, synthesis.csv and attack_manifest.json there.
AttackResult run_attack(const ModelHandle& benign, const SeriesDataset& external,
                        const TriggerSpec& trigger, const AttackConfig& cfg,
                        const std::filesystem::path& out_dir = {},
                        const EpochCallback& on_epoch = {});

}  // namespace tsb

#endif  // TSB_ATTACK_HPP_
