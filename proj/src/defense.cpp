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

#include "tsb/defense.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
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

constexpr int kScoreChunk = 64;

Tensor gather(const SeriesDataset& d, std::span<const std::size_t> idx) {
  const int length = static_cast<int>(d.samples[idx[0]].values.size());
  Tensor out = Tensor::uninitialized(Shape{static_cast<int>(idx.size()), 1, length});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& v = d.samples[idx[i]].values;
    std::copy(v.begin(), v.end(), out.row(static_cast<int>(i), 0));
  }
  return out;
}

std::vector<int> labels_of(const SeriesDataset& d, std::span<const std::size_t> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = d.samples[idx[i]].label;
  return out;
}

SeriesDataset subset(const SeriesDataset& d, std::span<const std::size_t> idx,
                     const std::string& suffix) {
  SeriesDataset out;
  out.name = d.name + suffix;
  out.num_classes = d.num_classes;
  out.series_length = d.series_length;
  out.class_labels = d.class_labels;
  for (std::size_t i : idx) out.samples.push_back(d.samples[i]);
  return out;
}

std::vector<Tensor> take_grads(const std::vector<nn::Var>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back(p->has_grad() ? p->grad : Tensor(p->value.shape()));
    p->zero_grad();
  }
  return out;
}

}  // namespace

void DefenseConfig::validate() const {
  if (!(r_percent > 0.0 && r_percent < 100.0)) throw InvalidArgument("r_percent must be in (0, 100)");
  if (!(alpha_end > 0.0)) throw InvalidArgument("alpha_end must be > 0");
  if (!(alpha_start >= alpha_end)) throw InvalidArgument("alpha_start must be >= alpha_end");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(toxic_grad_clip > 0.0)) throw InvalidArgument("toxic_grad_clip must be > 0");
}

nlohmann::json DefenseConfig::to_json() const {
  return {{"r_percent", r_percent},
          {"alpha_start", alpha_start},
          {"alpha_end", alpha_end},
          {"epochs", epochs},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"toxic_grad_clip", toxic_grad_clip},
          {"probe_layers", probe_layers},
          {"seed", seed}};
}

DefenseConfig DefenseConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("defense: expected an object");
  DefenseConfig c;
  try {
    read_field(j, "defense", "r_percent", c.r_percent);
    read_field(j, "defense", "alpha_start", c.alpha_start);
    read_field(j, "defense", "alpha_end", c.alpha_end);
    read_field(j, "defense", "epochs", c.epochs);
    read_field(j, "defense", "learning_rate", c.learning_rate);
    read_field(j, "defense", "batch_size", c.batch_size);
    read_field(j, "defense", "toxic_grad_clip", c.toxic_grad_clip);
    read_field(j, "defense", "probe_layers", c.probe_layers);
    read_field(j, "defense", "seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("defense: ") + e.what());
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("defense.") + e.what());
  }
  return c;
}

std::vector<double> score_samples(const ModelHandle& m, const SeriesDataset& d,
                                  const std::vector<std::string>& probe_layers) {
  ActivationProbe probe{probe_layers.empty() ? m.default_probe_layers() : probe_layers, {}};
  std::vector<double> scores;
  scores.reserve(d.size());
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t begin = 0; begin < all.size(); begin += kScoreChunk) {
    const std::size_t end = std::min(all.size(), begin + kScoreChunk);
    const auto norms =
        m.channel_norms(gather(d, std::span(all).subspan(begin, end - begin)), probe);
    for (std::size_t i = 0; i < end - begin; ++i) {
      double score = 0.0;
      for (const auto& id : probe.layer_ids) {
        const Tensor& t = norms.at(id);
        double sq = 0.0;
        for (int c = 0; c < t.shape().c; ++c) {
          const double v = t.at(static_cast<int>(i), c, 0);
          sq += v * v;
        }
        score += std::sqrt(sq);
      }
      scores.push_back(score);
    }
  }
  return scores;
}

std::size_t toxic_count(std::size_t n, double r_percent) {
  const double x = r_percent * static_cast<double>(n) / 100.0;
  // Guard against products like 7.000000000000001 rounding up.
  const double c = std::ceil(x - 1e-9 * std::max(1.0, x));
  return std::min(n, static_cast<std::size_t>(std::max(0.0, c)));
}

IsolationResult isolate(std::span<const double> scores, const SeriesDataset& d,
                        double r_percent) {
  if (scores.size() != d.size()) throw InvalidArgument("one score per sample is required");
  if (d.empty()) throw InvalidDataset("cannot isolate an empty dataset");
  if (!(r_percent > 0.0 && r_percent < 100.0)) {
    throw InvalidArgument("r_percent must be in (0, 100)");
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t n_toxic = toxic_count(d.size(), r_percent);

  IsolationResult out;
  out.scores.assign(scores.begin(), scores.end());
  out.toxic_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_toxic));
  out.clean_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_toxic), order.end());
  std::sort(out.clean_indices.begin(), out.clean_indices.end());
  out.toxic = subset(d, out.toxic_indices, "/toxic");
  out.clean = subset(d, out.clean_indices, "/clean");
  return out;
}

double alpha_at(const DefenseConfig& cfg, int epoch) {
  if (cfg.epochs <= 1) return cfg.alpha_start;
  if (epoch >= cfg.epochs - 1) return cfg.alpha_end;
  return cfg.alpha_start +
         (cfg.alpha_end - cfg.alpha_start) * static_cast<double>(epoch) / (cfg.epochs - 1);
}

ModelHandle unlearn(const ModelHandle& m, const IsolationResult& iso, const DefenseConfig& cfg,
                    const std::function<void(const DefenseEpoch&)>& on_epoch) {
  cfg.validate();
  const SeriesDataset& clean = iso.clean;
  const SeriesDataset& toxic = iso.toxic;
  if (clean.empty()) throw InvalidDataset("defense needs a non-empty clean partition");
  if (toxic.empty()) {
    std::clog << "warning: no toxic samples isolated; running plain fine-tuning\n";
  }

  ModelHandle model = m;
  const auto params = model.trainable_parameters();
  nn::Adam opt(params, nn::AdamOptions{cfg.learning_rate});
  Rng rng(cfg.seed);
  std::vector<std::size_t> clean_order(clean.size()), toxic_order(toxic.size());
  std::iota(clean_order.begin(), clean_order.end(), 0);
  std::iota(toxic_order.begin(), toxic_order.end(), 0);
  const std::size_t toxic_batch = std::min<std::size_t>(cfg.batch_size, toxic.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double alpha = alpha_at(cfg, epoch);
    rng.shuffle(std::span<std::size_t>(clean_order));
    rng.shuffle(std::span<std::size_t>(toxic_order));
    DefenseEpoch stats{epoch, alpha, 0.0, 0.0};
    std::size_t toxic_cursor = 0;
    int batches = 0;
    for (std::size_t begin = 0; begin < clean_order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(clean_order.size(), begin + cfg.batch_size);
      const auto idx = std::span<const std::size_t>(clean_order).subspan(begin, end - begin);
      opt.zero_grad();
      nn::Var clean_loss =
          nn::cross_entropy(model.train_forward(gather(clean, idx)), labels_of(clean, idx));
      double toxic_value = 0.0;
      if (toxic_batch > 0) {
        nn::backward(clean_loss);
        const auto g_clean = take_grads(params);

        std::vector<std::size_t> tidx(toxic_batch);
        for (auto& t : tidx) {
          t = toxic_order[toxic_cursor];
          toxic_cursor = (toxic_cursor + 1) % toxic_order.size();
        }
        nn::Var toxic_loss =
            nn::cross_entropy(model.train_forward(gather(toxic, tidx)), labels_of(toxic, tidx));
        toxic_value = toxic_loss->value[0];
        nn::backward(toxic_loss);
        auto g_toxic = take_grads(params);

        double sq = 0.0;
        for (const auto& g : g_toxic) {
          for (std::size_t i = 0; i < g.size(); ++i) sq += alpha * alpha * g[i] * g[i];
        }
        const double norm = std::sqrt(sq);
        const double factor = norm > cfg.toxic_grad_clip ? alpha * cfg.toxic_grad_clip / norm : alpha;
        // d/dθ (CE_clean - α CE_toxic), with the toxic part clipped.
        for (std::size_t p = 0; p < params.size(); ++p) {
          Tensor& g = params[p]->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] = g_clean[p][i] - factor * g_toxic[p][i];
        }
      } else {
        nn::backward(clean_loss);
      }
      const double total = clean_loss->value[0] - alpha * toxic_value;
      if (!std::isfinite(total)) throw DefenseError("non-finite unlearning loss", epoch);
      opt.step();
      stats.clean_loss += clean_loss->value[0];
      stats.toxic_loss += toxic_value;
      ++batches;
    }
    stats.clean_loss /= batches;
    stats.toxic_loss /= batches;
    if (on_epoch) on_epoch(stats);
  }
  return model;
}

void write_isolation_csv(const IsolationResult& iso, const SeriesDataset& d,
                         const std::filesystem::path& path) {
  std::vector<int> rank(iso.scores.size(), -1);
  std::vector<bool> is_toxic(iso.scores.size(), false);
  for (std::size_t r = 0; r < iso.toxic_indices.size(); ++r) {
    rank[iso.toxic_indices[r]] = static_cast<int>(r);
    is_toxic[iso.toxic_indices[r]] = true;
  }
  // Full ranking, same rule as isolate().
  std::vector<std::size_t> order(iso.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return iso.scores[a] > iso.scores[b]; });
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);

  CsvWriter csv(path, {"index", "score", "rank", "partition", "provenance"});
  for (std::size_t i = 0; i < iso.scores.size(); ++i) {
    csv.field(i)
        .field(iso.scores[i])
        .field(rank[i])
        .field(is_toxic[i] ? "toxic" : "clean")
        .field(i < d.size() ? to_string(d.samples[i].provenance) : std::string_view("unknown"))
        .end_row();
  }
}

SeriesDataset build_defense_scenario(const SeriesDataset& train, const TriggerSpec& trigger,
                                     int target, double poison_ratio, std::uint64_t seed) {
  if (target < 0 || target >= train.num_classes) {
    throw InvalidArgument("target class outside the dataset's classes");
  }
  if (!(poison_ratio >= 0.0 && poison_ratio <= 1.0)) {
    throw InvalidArgument("poison_ratio must be in [0, 1]");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train.samples[i].label != target) candidates.push_back(i);
  }
  const auto wanted =
      static_cast<std::size_t>(std::llround(poison_ratio * static_cast<double>(train.size())));
  if (wanted > candidates.size()) {
    throw InvalidDataset("not enough non-target samples to poison");
  }
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(candidates));
  candidates.resize(wanted);
  SeriesDataset out = train;
  out.name = train.name + "+poisoned";
  for (std::size_t i : candidates) {
    out.samples[i] = apply_trigger(out.samples[i], trigger);
    out.samples[i].label = target;
  }
  return out;
}

DefenseResult run_defense(const ModelHandle& m, const SeriesDataset& d, const DefenseConfig& cfg,
                          const std::filesystem::path& out_dir,
                          const std::function<void(const DefenseEpoch&)>& on_epoch) {
  cfg.validate();
  const auto probes = cfg.probe_layers.empty() ? m.default_probe_layers() : cfg.probe_layers;
  const auto scores = score_samples(m, d, probes);
  DefenseResult result{m, isolate(scores, d, cfg.r_percent)};
  result.sanitized = unlearn(m, result.isolation, cfg, on_epoch);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_checkpoint(result.sanitized, out_dir / "sanitized.ckpt");
    write_isolation_csv(result.isolation, d, out_dir / "isolation.csv");
    std::size_t triggered_in_toxic = 0;
    for (std::size_t i : result.isolation.toxic_indices) {
      triggered_in_toxic += d.samples[i].provenance == Provenance::kTriggered;
    }
    write_json({{"tool", "tsbackdoor"},
                {"version", std::string(kVersion)},
                {"revision", std::string(kRevision)},
                {"stage", "defend"},
                {"dataset", d.name},
                {"dataset_size", d.size()},
                {"probe_layers", probes},
                {"defense", cfg.to_json()},
                {"toxic", result.isolation.toxic_indices.size()},
                {"triggered_in_toxic", triggered_in_toxic}},
               out_dir / "defense_manifest.json");
  }
  return result;
}

}  // namespace tsb
