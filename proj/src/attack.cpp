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

#include "tsb/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tsb/errors.hpp"
#include "tsb/nn/adam.hpp"
#include "tsb/nn/ops.hpp"
#include "tsb/random.hpp"
#include "tsb/table.hpp"
#include "tsb/version.hpp"

namespace tsb {

using nn::Shape;
using nn::Tensor;

namespace {

// Samples per PGD forward; rows are independent in eval mode.
constexpr int kPgdChunk = 32;

double sign(double v) { return (v > 0.0) - (v < 0.0); }

Tensor gather(std::span<const SynthesisRecord> records, std::span<const std::size_t> idx,
              bool triggered_copy, const std::vector<std::vector<double>>& triggered) {
  const int length = static_cast<int>(records.front().x_adv.size());
  Tensor out = Tensor::uninitialized(Shape{static_cast<int>(idx.size()), 1, length});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& src = triggered_copy ? triggered[idx[i]] : records[idx[i]].x_adv;
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(i), 0));
  }
  return out;
}

}  // namespace

void AttackConfig::validate(int num_classes) const {
  if (pgd_steps < 0) throw InvalidArgument("pgd_steps must be >= 0");
  if (!(pgd_step_size >= 0.0)) throw InvalidArgument("pgd_step_size must be >= 0");
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (target_class < 0 || target_class >= num_classes) {
    throw InvalidArgument("target_class " + std::to_string(target_class) +
                          " outside [0, " + std::to_string(num_classes) + ")");
  }
}

nlohmann::json AttackConfig::to_json() const {
  return nlohmann::json{{"pgd_steps", pgd_steps},
                        {"pgd_step_size", pgd_step_size},
                        {"lambda", lambda},
                        {"epochs", epochs},
                        {"learning_rate", learning_rate},
                        {"batch_size", batch_size},
                        {"target_class", target_class},
                        {"optimizer", "adam"},
                        {"keep_failed_adversarials", keep_failed_adversarials},
                        {"bn_freeze", bn_freeze},
                        {"logits_alignment", logits_alignment},
                        {"use_adv_synthesis", use_adv_synthesis},
                        {"seed", seed}};
}

AttackConfig AttackConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("attack: expected an object");
  AttackConfig c;
  try {
    read_field(j, "attack", "pgd_steps", c.pgd_steps);
    read_field(j, "attack", "pgd_step_size", c.pgd_step_size);
    read_field(j, "attack", "lambda", c.lambda);
    read_field(j, "attack", "epochs", c.epochs);
    read_field(j, "attack", "learning_rate", c.learning_rate);
    read_field(j, "attack", "batch_size", c.batch_size);
    read_field(j, "attack", "target_class", c.target_class);
    if (j.value("optimizer", std::string("adam")) != "adam") {
      throw ConfigError("attack.optimizer: only \"adam\" is supported");
    }
    read_field(j, "attack", "keep_failed_adversarials", c.keep_failed_adversarials);
    read_field(j, "attack", "bn_freeze", c.bn_freeze);
    read_field(j, "attack", "logits_alignment", c.logits_alignment);
    read_field(j, "attack", "use_adv_synthesis", c.use_adv_synthesis);
    read_field(j, "attack", "seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("attack: ") + e.what());
  }
  if (c.pgd_steps < 0) throw ConfigError("attack.pgd_steps: must be >= 0");
  if (!(c.learning_rate > 0.0)) throw ConfigError("attack.learning_rate: must be > 0");
  if (!(c.lambda >= 0.0)) throw ConfigError("attack.lambda: must be >= 0");
  if (c.epochs < 0) throw ConfigError("attack.epochs: must be >= 0");
  if (c.batch_size < 1) throw ConfigError("attack.batch_size: must be >= 1");
  return c;
}

int SynthesisRecord::pseudo_label() const {
  return attack_succeeded ? target_class : nn::argmax(y_adv_logits);
}

Tensor targeted_pgd(const InputGradientFn& gradient, const Tensor& batch,
                    std::span<const int> targets, int steps, double step_size) {
  if (static_cast<int>(targets.size()) != batch.shape().n) {
    throw InvalidArgument("targeted_pgd: one target per row is required");
  }
  Tensor x = batch;
  for (int s = 0; s < steps; ++s) {
    const Tensor g = gradient(x, targets);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= step_size * sign(g[i]);
  }
  return x;
}

Tensor targeted_pgd(const ModelHandle& m, const Tensor& batch, std::span<const int> targets,
                    int steps, double step_size) {
  for (int t : targets) {
    if (t < 0 || t >= m.num_classes()) throw InvalidArgument("targeted_pgd: target out of range");
  }
  return targeted_pgd(
      [&m](const Tensor& x, std::span<const int> t) { return m.input_gradient(x, t); }, batch,
      targets, steps, step_size);
}

std::vector<double> targeted_pgd(const ModelHandle& m, std::span<const double> x, int target,
                                 int steps, double step_size) {
  Tensor batch(Shape{1, 1, static_cast<int>(x.size())}, std::vector<double>(x.begin(), x.end()));
  const int t[] = {target};
  return targeted_pgd(m, batch, t, steps, step_size).vector();
}

std::vector<SynthesisRecord> synthesize_pseudo_dataset(const ModelHandle& benign,
                                                       const SeriesDataset& external,
                                                       const AttackConfig& cfg) {
  if (external.empty()) throw InvalidDataset("external dataset is empty");
  const int k = benign.num_classes();
  const int length = benign.input_length();
  for (const auto& s : external.samples) {
    if (static_cast<int>(s.values.size()) != length) {
      throw InvalidDataset("external series must be resized to " + std::to_string(length));
    }
  }

  // Pairs in sample-major order: (0,0), (0,1), ..., (1,0), ...
  const int pairs = static_cast<int>(external.size()) * k;
  std::vector<SynthesisRecord> records;
  for (int begin = 0; begin < pairs; begin += kPgdChunk) {
    const int count = std::min(kPgdChunk, pairs - begin);
    Tensor batch = Tensor::uninitialized(Shape{count, 1, length});
    std::vector<int> targets(count);
    for (int i = 0; i < count; ++i) {
      const int p = begin + i;
      const auto& src = external.samples[p / k].values;
      std::copy(src.begin(), src.end(), batch.row(i, 0));
      targets[i] = p % k;
    }
    const Tensor adv = targeted_pgd(benign, batch, targets, cfg.pgd_steps, cfg.pgd_step_size);
    const Tensor logits = benign.forward_logits(adv);
    for (int i = 0; i < count; ++i) {
      SynthesisRecord r;
      r.x_adv.assign(adv.row(i, 0), adv.row(i, 0) + length);
      r.y_adv_logits.assign(logits.row(i, 0), logits.row(i, 0) + k);
      r.target_class = targets[i];
      r.attack_succeeded = nn::argmax(r.y_adv_logits) == r.target_class;
      r.source_index = (begin + i) / k;
      if (r.attack_succeeded || cfg.keep_failed_adversarials) records.push_back(std::move(r));
    }
  }
  return records;
}

std::vector<SynthesisRecord> raw_pseudo_dataset(const ModelHandle& benign,
                                                const SeriesDataset& external) {
  if (external.empty()) throw InvalidDataset("external dataset is empty");
  const Tensor batch = nn::stack_series(external.values());
  const Tensor logits = benign.forward_logits(batch);
  const int k = benign.num_classes();
  std::vector<SynthesisRecord> records;
  for (int i = 0; i < batch.shape().n; ++i) {
    SynthesisRecord r;
    r.x_adv = external.samples[i].values;
    r.y_adv_logits.assign(logits.row(i, 0), logits.row(i, 0) + k);
    r.target_class = nn::argmax(r.y_adv_logits);
    r.attack_succeeded = true;
    r.source_index = i;
    records.push_back(std::move(r));
  }
  return records;
}

ModelHandle trojan_train(const ModelHandle& benign, std::span<const SynthesisRecord> records,
                         const TriggerSpec& trigger, const AttackConfig& cfg,
                         const EpochCallback& on_epoch) {
  cfg.validate(benign.num_classes());
  if (records.empty()) throw InvalidDataset("no synthesis records to train on");
  const int k = benign.num_classes();
  const int length = benign.input_length();
  trigger.check_fits(length);
  for (const auto& r : records) {
    if (static_cast<int>(r.x_adv.size()) != length || static_cast<int>(r.y_adv_logits.size()) != k) {
      throw InvalidDataset("synthesis record does not match the model");
    }
  }

  ModelHandle model = benign;
  model.set_bn_frozen(cfg.bn_freeze);

  std::vector<std::vector<double>> triggered(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    triggered[i] = apply_trigger(LabeledSeries{records[i].x_adv, 0, Provenance::kAdversarial},
                                 trigger)
                       .values;
  }

  nn::Adam opt(model.trainable_parameters(), nn::AdamOptions{cfg.learning_rate});
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    EpochStats stats{epoch, 0.0, 0.0};
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const int n = static_cast<int>(idx.size());

      opt.zero_grad();
      // x_adv and T(x_adv) run as two forwards so that unfrozen batch norm
      // sees each batch on its own.
      nn::Var logits = model.train_forward(gather(records, idx, false, triggered));
      nn::Var align;
      if (cfg.logits_alignment) {
        Tensor target = Tensor::uninitialized(Shape{n, k, 1});
        for (int i = 0; i < n; ++i) {
          std::copy_n(records[idx[i]].y_adv_logits.data(), k, target.row(i, 0));
        }
        align = nn::mean_squared_norm(logits, target);
      } else {
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) labels[i] = records[idx[i]].pseudo_label();
        align = nn::cross_entropy(logits, labels);
      }
      nn::Var bd_logits = model.train_forward(gather(records, idx, true, triggered));
      const std::vector<int> target_labels(n, cfg.target_class);
      nn::Var backdoor = nn::cross_entropy(bd_logits, target_labels);
      nn::Var loss = nn::add(align, nn::scale(backdoor, cfg.lambda));
      if (!std::isfinite(loss->value[0])) throw TrainingError("non-finite trojan loss", epoch);
      nn::backward(loss);
      opt.step();
      stats.alignment_loss += align->value[0] * n;
      stats.backdoor_loss += backdoor->value[0] * n;
    }
    stats.alignment_loss /= static_cast<double>(records.size());
    stats.backdoor_loss /= static_cast<double>(records.size());
    if (on_epoch) on_epoch(stats);
  }
  return model;
}

void save_synthesis_archive(std::span<const SynthesisRecord> records,
                            const std::filesystem::path& path) {
  if (records.empty()) throw InvalidArgument("no synthesis records to save");
  const std::size_t k = records.front().y_adv_logits.size();
  const std::size_t length = records.front().x_adv.size();
  std::vector<std::string> header{"index", "source_index", "target_class", "attack_succeeded"};
  for (std::size_t i = 0; i < k; ++i) header.push_back("logit_" + std::to_string(i));
  for (std::size_t i = 0; i < length; ++i) header.push_back("x_" + std::to_string(i));
  CsvWriter csv(path, header);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.y_adv_logits.size() != k || r.x_adv.size() != length) {
      throw InvalidArgument("synthesis records have inconsistent shapes");
    }
    csv.field(static_cast<long long>(i))
        .field(r.source_index)
        .field(r.target_class)
        .field(r.attack_succeeded ? 1 : 0);
    for (double v : r.y_adv_logits) csv.field(v);
    for (double v : r.x_adv) csv.field(v);
    csv.end_row();
  }
}

std::vector<SynthesisRecord> load_synthesis_archive(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const auto& h = table.header;
  if (h.size() < 6 || h[0] != "index" || h[3] != "attack_succeeded") {
    throw ParseError("not a synthesis archive: " + path.string(), 1);
  }
  std::size_t k = 0;
  while (4 + k < h.size() && h[4 + k].starts_with("logit_")) ++k;
  const std::size_t length = h.size() - 4 - k;
  if (k < 2 || length < 2) throw ParseError("synthesis archive lacks logits or values", 1);

  std::vector<SynthesisRecord> out;
  for (std::size_t row = 0; row < table.rows.size(); ++row) {
    const auto& cells = table.rows[row];
    const std::size_t line = row + 2;
    SynthesisRecord r;
    r.source_index = static_cast<int>(parse_double(cells[1], line));
    r.target_class = static_cast<int>(parse_double(cells[2], line));
    r.attack_succeeded = parse_double(cells[3], line) != 0.0;
    for (std::size_t i = 0; i < k; ++i) r.y_adv_logits.push_back(parse_double(cells[4 + i], line));
    for (std::size_t i = 0; i < length; ++i) {
      r.x_adv.push_back(parse_double(cells[4 + k + i], line));
    }
    out.push_back(std::move(r));
  }
  return out;
}

AttackResult run_attack(const ModelHandle& benign, const SeriesDataset& external,
                        const TriggerSpec& trigger, const AttackConfig& cfg,
                        const std::filesystem::path& out_dir, const EpochCallback& on_epoch) {
  cfg.validate(benign.num_classes());
  const SeriesDataset resized = resize_dataset(external, benign.input_length());

  std::vector<SynthesisRecord> records;
  int attempted = 0;
  int succeeded = 0;
  if (cfg.use_adv_synthesis) {
    AttackConfig keep = cfg;
    keep.keep_failed_adversarials = true;
    auto all = synthesize_pseudo_dataset(benign, resized, keep);
    attempted = static_cast<int>(all.size());
    for (auto& r : all) {
      succeeded += r.attack_succeeded;
      if (r.attack_succeeded || cfg.keep_failed_adversarials) records.push_back(std::move(r));
    }
  } else {
    records = raw_pseudo_dataset(benign, resized);
  }
  if (records.empty()) {
    throw TrainingError("no adversarial sample reached its target class", 0);
  }

  AttackResult result{trojan_train(benign, records, trigger, cfg, on_epoch), std::move(records),
                      attempted, succeeded};

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_checkpoint(result.trojaned, out_dir / "trojaned.ckpt");
    save_synthesis_archive(result.records, out_dir / "synthesis.csv");
    const nlohmann::json manifest{
        {"tool", "tsbackdoor"},
        {"version", std::string(kVersion)},
        {"revision", std::string(kRevision)},
        {"stage", "attack"},
        {"external_dataset", external.name},
        {"external_size", external.size()},
        {"model", benign.options().to_json()},
        {"trigger", trigger.to_json()},
        {"attack", cfg.to_json()},
        {"synthesis", {{"attempted", attempted},
                       {"succeeded", succeeded},
                       {"records_used", result.records.size()}}}};
    write_json(manifest, out_dir / "attack_manifest.json");
  }
  return result;
}

}  // namespace tsb
