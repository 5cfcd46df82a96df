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

#include "tsb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
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

constexpr int kEvalChunk = 64;

void check_eval_set(const ModelHandle& m, const SeriesDataset& d) {
  if (d.empty()) throw InvalidDataset("evaluation set '" + d.name + "' is empty");
  for (const auto& s : d.samples) {
    if (static_cast<int>(s.values.size()) != m.input_length()) {
      throw InvalidDataset("evaluation series length " + std::to_string(s.values.size()) +
                           " does not match the model length " +
                           std::to_string(m.input_length()));
    }
  }
}

Tensor gather(const SeriesDataset& d, std::span<const std::size_t> idx) {
  const int length = static_cast<int>(d.samples[idx[0]].values.size());
  Tensor out = Tensor::uninitialized(Shape{static_cast<int>(idx.size()), 1, length});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& v = d.samples[idx[i]].values;
    std::copy(v.begin(), v.end(), out.row(static_cast<int>(i), 0));
  }
  return out;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

std::vector<int> predict_all(const ModelHandle& m, const SeriesDataset& d) {
  check_eval_set(m, d);
  const auto all = iota_indices(d.size());
  std::vector<int> out;
  out.reserve(d.size());
  for (std::size_t begin = 0; begin < all.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(all.size(), begin + kEvalChunk);
    const auto p = m.predict(gather(d, std::span(all).subspan(begin, end - begin)));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double clean_accuracy(const ModelHandle& m, const SeriesDataset& d) {
  const auto pred = predict_all(m, d);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == d.samples[i].label;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<double> per_class_accuracy(const ModelHandle& m, const SeriesDataset& d) {
  const auto pred = predict_all(m, d);
  const int k = m.num_classes();
  std::vector<double> hits(k, 0.0), count(k, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int y = d.samples[i].label;
    if (y < 0 || y >= k) throw InvalidDataset("label outside the model's classes");
    count[y] += 1.0;
    hits[y] += pred[i] == y;
  }
  std::vector<double> acc(k);
  for (int c = 0; c < k; ++c) {
    acc[c] = count[c] > 0.0 ? hits[c] / count[c] : std::numeric_limits<double>::quiet_NaN();
  }
  return acc;
}

int asr_denominator(const SeriesDataset& d, int target, bool include_target) {
  int n = 0;
  for (const auto& s : d.samples) n += include_target || s.label != target;
  return n;
}

double attack_success_rate(const ModelHandle& m, const SeriesDataset& d,
                           const TriggerSpec& trigger, int target, bool include_target) {
  if (target < 0 || target >= m.num_classes()) {
    throw InvalidArgument("target class outside the model's classes");
  }
  SeriesDataset triggered;
  triggered.name = d.name + "+trigger";
  triggered.num_classes = d.num_classes;
  triggered.series_length = d.series_length;
  for (const auto& s : d.samples) {
    if (include_target || s.label != target) triggered.samples.push_back(apply_trigger(s, trigger));
  }
  if (triggered.empty()) {
    throw InvalidDataset("attack success rate is undefined: every sample of '" + d.name +
                         "' belongs to the target class");
  }
  const auto pred = predict_all(m, triggered);
  const auto hits = std::count(pred.begin(), pred.end(), target);
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  TrainConfig c;
  try {
    read_field(j, "train", "epochs", c.epochs);
    read_field(j, "train", "learning_rate", c.learning_rate);
    read_field(j, "train", "batch_size", c.batch_size);
    read_field(j, "train", "seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (c.epochs < 0) throw ConfigError("train.epochs: must be >= 0");
  if (!(c.learning_rate > 0.0)) throw ConfigError("train.learning_rate: must be > 0");
  if (c.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  return c;
}

TrainResult train_benign(const ModelOptions& options, const SeriesDataset& train,
                         const SeriesDataset& test, const TrainConfig& cfg,
                         const std::filesystem::path& out_dir,
                         const std::function<void(const TrainEpoch&)>& on_epoch) {
  if (cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) || cfg.epochs < 0) {
    throw InvalidArgument("invalid training configuration");
  }
  ModelHandle model(options);
  check_eval_set(model, train);
  check_eval_set(model, test);
  for (const auto& s : train.samples) {
    if (s.label < 0 || s.label >= model.num_classes()) {
      throw InvalidDataset("training label outside the model's classes");
    }
  }

  nn::Adam opt(model.trainable_parameters(), nn::AdamOptions{cfg.learning_rate});
  Rng rng(cfg.seed);
  auto order = iota_indices(train.size());
  TrainResult result{model, model, 0, clean_accuracy(model, test), {}};
  result.best_epoch = -1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const auto idx = std::span<const std::size_t>(order).subspan(begin, end - begin);
      std::vector<int> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train.samples[idx[i]].label;
      opt.zero_grad();
      nn::Var loss = nn::cross_entropy(model.train_forward(gather(train, idx)), labels);
      if (!std::isfinite(loss->value[0])) throw TrainingError("non-finite training loss", epoch);
      nn::backward(loss);
      opt.step();
      total += loss->value[0] * static_cast<double>(idx.size());
    }
    TrainEpoch stats{epoch, total / static_cast<double>(train.size()),
                     clean_accuracy(model, test)};
    if (stats.test_accuracy > result.best_accuracy || result.best_epoch < 0) {
      result.best = model;
      result.best_epoch = epoch;
      result.best_accuracy = stats.test_accuracy;
    }
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  if (result.best_epoch < 0) result.best_epoch = 0;
  result.last = std::move(model);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_checkpoint(result.last, out_dir / "last.ckpt");
    save_checkpoint(result.best, out_dir / "best.ckpt");
    CsvWriter log(out_dir / "train_log.csv", {"epoch", "loss", "test_accuracy"});
    for (const auto& e : result.history) log.field(e.epoch).field(e.loss).field(e.test_accuracy).end_row();
    write_json({{"tool", "tsbackdoor"},
                {"version", std::string(kVersion)},
                {"revision", std::string(kRevision)},
                {"stage", "train-benign"},
                {"train_dataset", train.name},
                {"test_dataset", test.name},
                {"model", options.to_json()},
                {"train", cfg.to_json()},
                {"best_epoch", result.best_epoch},
                {"best_accuracy", result.best_accuracy},
                {"last_accuracy", result.history.empty() ? result.best_accuracy
                                                         : result.history.back().test_accuracy}},
               out_dir / "train_manifest.json");
  }
  return result;
}

double NormDifference::layer_mean(std::size_t layer) const {
  const auto& row = values.at(layer);
  if (row.empty()) return 0.0;
  return std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
}

namespace {

// Mean over samples of each probed layer's channel norms.
std::vector<std::vector<double>> mean_channel_norms(const ModelHandle& m,
                                                    const std::vector<std::string>& layers,
                                                    const SeriesDataset& d) {
  check_eval_set(m, d);
  ActivationProbe probe{layers, {}};
  std::vector<std::vector<double>> sums(layers.size());
  const auto all = iota_indices(d.size());
  for (std::size_t begin = 0; begin < all.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(all.size(), begin + kEvalChunk);
    const auto norms = m.channel_norms(gather(d, std::span(all).subspan(begin, end - begin)), probe);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Tensor& t = norms.at(layers[l]);
      sums[l].resize(static_cast<std::size_t>(t.shape().c), 0.0);
      for (int n = 0; n < t.shape().n; ++n) {
        for (int c = 0; c < t.shape().c; ++c) sums[l][c] += t.at(n, c, 0);
      }
    }
  }
  for (auto& row : sums) {
    for (double& v : row) v /= static_cast<double>(d.size());
  }
  return sums;
}

}  // namespace

NormDifference norm_difference_matrix(const ModelHandle& m,
                                      const std::vector<std::string>& probe_layers,
                                      const SeriesDataset& clean, const SeriesDataset& bd) {
  const auto a = mean_channel_norms(m, probe_layers, clean);
  const auto b = mean_channel_norms(m, probe_layers, bd);
  NormDifference out{probe_layers, {}};
  for (std::size_t l = 0; l < probe_layers.size(); ++l) {
    std::vector<double> row(a[l].size());
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = std::abs(b[l][c] - a[l][c]);
    out.values.push_back(std::move(row));
  }
  return out;
}

void write_norm_difference_csv(const NormDifference& diff, const std::filesystem::path& path) {
  CsvWriter csv(path, {"layer", "channel", "value"});
  for (std::size_t l = 0; l < diff.layers.size(); ++l) {
    for (std::size_t c = 0; c < diff.values[l].size(); ++c) {
      csv.field(diff.layers[l]).field(c).field(diff.values[l][c]).end_row();
    }
  }
}

void export_features(const ModelHandle& m, const SeriesDataset& d,
                     const std::filesystem::path& path) {
  check_eval_set(m, d);
  const int f = m.feature_dim();
  std::vector<std::string> header{"index", "label", "provenance"};
  for (int i = 0; i < f; ++i) header.push_back("f_" + std::to_string(i));
  CsvWriter csv(path, header);
  const auto all = iota_indices(d.size());
  for (std::size_t begin = 0; begin < all.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(all.size(), begin + kEvalChunk);
    const Tensor feats =
        m.penultimate_features(gather(d, std::span(all).subspan(begin, end - begin)));
    for (std::size_t i = begin; i < end; ++i) {
      const auto& s = d.samples[i];
      csv.field(i).field(s.label).field(to_string(s.provenance));
      for (int c = 0; c < f; ++c) csv.field(feats.at(static_cast<int>(i - begin), c, 0));
      csv.end_row();
    }
  }
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"clean_accuracy", clean_accuracy},
                   {"per_class_accuracy", nlohmann::json::array()},
                   {"n_clean_eval", n_clean_eval},
                   {"n_asr_eval", n_asr_eval},
                   {"manifest", manifest}};
  // NaN is not JSON; absent classes become null.
  for (double v : per_class_accuracy) {
    j["per_class_accuracy"].push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
  }
  j["attack_success_rate"] =
      attack_success_rate ? nlohmann::json(*attack_success_rate) : nlohmann::json();
  if (norm_diff) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < norm_diff->layers.size(); ++l) {
      layers.push_back({{"layer", norm_diff->layers[l]}, {"values", norm_diff->values[l]}});
    }
    j["norm_diff"] = layers;
  }
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.clean_accuracy = j.at("clean_accuracy").get<double>();
    for (const auto& v : j.at("per_class_accuracy")) {
      r.per_class_accuracy.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                 : v.get<double>());
    }
    r.n_clean_eval = j.at("n_clean_eval").get<int>();
    r.n_asr_eval = j.at("n_asr_eval").get<int>();
    if (j.contains("attack_success_rate") && !j["attack_success_rate"].is_null()) {
      r.attack_success_rate = j["attack_success_rate"].get<double>();
    }
    if (j.contains("norm_diff")) {
      NormDifference nd;
      for (const auto& l : j["norm_diff"]) {
        nd.layers.push_back(l.at("layer").get<std::string>());
        nd.values.push_back(l.at("values").get<std::vector<double>>());
      }
      r.norm_diff = std::move(nd);
    }
    r.manifest = j.value("manifest", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("eval report: ") + e.what());
  }
  return r;
}

EvalReport evaluate(const ModelHandle& m, const SeriesDataset& test,
                    const std::optional<TriggerSpec>& trigger, int target, bool include_target) {
  EvalReport r;
  r.clean_accuracy = clean_accuracy(m, test);
  r.per_class_accuracy = per_class_accuracy(m, test);
  r.n_clean_eval = static_cast<int>(test.size());
  if (trigger) {
    r.attack_success_rate = attack_success_rate(m, test, *trigger, target, include_target);
    r.n_asr_eval = asr_denominator(test, target, include_target);
  }
  return r;
}

}  // namespace tsb
