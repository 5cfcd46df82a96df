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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "test_util.hpp"
#include "tsb/errors.hpp"
#include "tsb/eval.hpp"
#include "tsb/table.hpp"

namespace tsb {
namespace {

using testing::toy;

constexpr int kLength = 24;

SeriesDataset random_set(int n, int k, std::uint64_t seed) {
  return testing::random_dataset(n, k, kLength, seed);
}

TEST(Metrics, CleanAccuracyEqualsBruteForceCount) {
  ModelHandle m(toy(Architecture::kInceptionTime));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto d = random_set(150, 3, seed);  // spans several eval chunks
    int hits = 0;
    for (const auto& s : d.samples) hits += m.predict(s.values) == s.label;
    EXPECT_EQ(clean_accuracy(m, d), static_cast<double>(hits) / 150.0);
  }
}

TEST(Metrics, ConstantPredictorAccuracyIsClassShare) {
  ModelHandle m(toy(Architecture::kInceptionTime, 2));
  testing::make_constant_predictor(m, 0);
  auto d = random_set(10, 2, 4);
  for (int i = 0; i < 10; ++i) d.samples[i].label = i < 4 ? 0 : 1;
  EXPECT_DOUBLE_EQ(clean_accuracy(m, d), 0.4);
  const auto per_class = per_class_accuracy(m, d);
  EXPECT_EQ(per_class[0], 1.0);
  EXPECT_EQ(per_class[1], 0.0);
}

TEST(Metrics, AlwaysTargetModelHasFullSuccessRate) {
  for (int k = 0; k < 3; ++k) {
    ModelHandle m(toy(Architecture::kInceptionTime));
    testing::make_constant_predictor(m, k);
    const auto d = random_set(30, 3, 5);
    EXPECT_EQ(attack_success_rate(m, d, TriggerSpec::fixed_patch(4), k), 1.0);
    EXPECT_EQ(attack_success_rate(m, d, TriggerSpec::fixed_patch(4), k, true), 1.0);
  }
}

TEST(Metrics, IdentityTriggerOnPerfectModelHasZeroSuccessRate) {
  ModelHandle m(toy(Architecture::kInceptionTime));
  const auto d = testing::relabel_with_predictions(m, random_set(40, 3, 6));
  ASSERT_EQ(clean_accuracy(m, d), 1.0);
  const auto identity = TriggerSpec::powerline(10, 0.0);
  for (int k = 0; k < 3; ++k) {
    if (asr_denominator(d, k) == 0) continue;
    EXPECT_EQ(attack_success_rate(m, d, identity, k), 0.0);
  }
}

TEST(Metrics, SuccessRateMatchesBruteForceUnderBothConventions) {
  ModelHandle m(toy(Architecture::kInceptionTime));
  const auto d = random_set(60, 3, 7);
  const auto trigger = TriggerSpec::fixed_patch(6, 2.0);
  for (bool include : {false, true}) {
    int n = 0, hits = 0;
    for (const auto& s : d.samples) {
      if (!include && s.label == 1) continue;
      ++n;
      hits += m.predict(apply_trigger(s, trigger).values) == 1;
    }
    EXPECT_EQ(asr_denominator(d, 1, include), n);
    EXPECT_EQ(attack_success_rate(m, d, trigger, 1, include),
              static_cast<double>(hits) / n);
  }
}

TEST(Metrics, TargetClassSamplesDoNotMoveTheSuccessRate) {
  ModelHandle m(toy(Architecture::kInceptionTime));
  auto d = random_set(40, 3, 8);
  const auto trigger = TriggerSpec::fixed_patch(5, 1.5);
  const double before = attack_success_rate(m, d, trigger, 2);
  auto extra = random_set(25, 3, 9);
  for (auto& s : extra.samples) {
    s.label = 2;
    d.samples.push_back(s);
  }
  EXPECT_EQ(attack_success_rate(m, d, trigger, 2), before);
}

TEST(Metrics, CleanAccuracyIsFrequencyWeightedClassAccuracy) {
  ModelHandle m(toy(Architecture::kLstmFcn, 4));
  const auto d = random_set(90, 4, 10);
  const auto per_class = per_class_accuracy(m, d);
  std::vector<int> counts(4, 0);
  for (const auto& s : d.samples) ++counts[s.label];
  double weighted = 0.0;
  for (int c = 0; c < 4; ++c) {
    if (counts[c] > 0) weighted += per_class[c] * counts[c] / 90.0;
  }
  EXPECT_NEAR(weighted, clean_accuracy(m, d), 1e-12);
}

TEST(Metrics, AbsentClassHasNaNAccuracy) {
  ModelHandle m(toy(Architecture::kInceptionTime));
  auto d = random_set(10, 3, 11);
  for (auto& s : d.samples) s.label = 0;
  const auto per_class = per_class_accuracy(m, d);
  EXPECT_FALSE(std::isnan(per_class[0]));
  EXPECT_TRUE(std::isnan(per_class[1]));
}

TEST(Metrics, UndefinedInputsRaise) {
  ModelHandle m(toy(Architecture::kInceptionTime));
  SeriesDataset empty;
  EXPECT_THROW(clean_accuracy(m, empty), InvalidDataset);
  auto d = random_set(5, 3, 12);
  for (auto& s : d.samples) s.label = 1;
  EXPECT_THROW(attack_success_rate(m, d, TriggerSpec::fixed_patch(4), 1), InvalidDataset);
  EXPECT_NO_THROW(attack_success_rate(m, d, TriggerSpec::fixed_patch(4), 1, true));
  EXPECT_THROW(attack_success_rate(m, d, TriggerSpec::fixed_patch(4), 3), InvalidArgument);
  d.samples[0].values.pop_back();
  EXPECT_THROW(clean_accuracy(m, d), InvalidDataset);
}

TEST(TrainBenign, LearnsSeparableRampsAndKeepsBest) {
  const auto train = testing::ramp_dataset(16, 32, 1);
  const auto test = testing::ramp_dataset(20, 32, 2);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 8;
  std::vector<TrainEpoch> seen;
  const auto r = train_benign(toy(Architecture::kInceptionTime, 2, 32), train, test, cfg, {},
                              [&](const TrainEpoch& e) { seen.push_back(e); });
  ASSERT_EQ(seen.size(), 15u);
  EXPECT_EQ(r.history.size(), 15u);
  EXPECT_EQ(clean_accuracy(r.best, test), r.best_accuracy);
  EXPECT_EQ(r.history[r.best_epoch].test_accuracy, r.best_accuracy);
  for (const auto& e : r.history) EXPECT_LE(e.test_accuracy, r.best_accuracy);
  EXPECT_EQ(clean_accuracy(r.last, test), r.history.back().test_accuracy);
  EXPECT_EQ(r.best_accuracy, 1.0);
  EXPECT_LT(r.history.back().loss, r.history.front().loss);
}

TEST(TrainBenign, SameSeedIsBitReproducibleAndWritesArtifacts) {
  const auto train = testing::ramp_dataset(12, 32, 3);
  const auto test = testing::ramp_dataset(8, 32, 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  const auto dir = testing::temp_dir("train_benign");
  const auto a = train_benign(toy(Architecture::kTcn, 2, 32), train, test, cfg, dir);
  const auto b = train_benign(toy(Architecture::kTcn, 2, 32), train, test, cfg);
  EXPECT_EQ(a.last.state(), b.last.state());
  EXPECT_EQ(load_checkpoint(dir / "last.ckpt").state(), a.last.state());
  EXPECT_EQ(load_checkpoint(dir / "best.ckpt").state(), a.best.state());
  EXPECT_EQ(read_csv(dir / "train_log.csv").rows.size(), 3u);
  EXPECT_EQ(read_json(dir / "train_manifest.json").at("stage"), "train-benign");
}

TEST(TrainBenign, DivergenceRaisesTrainingError) {
  auto train = testing::ramp_dataset(8, 32, 5);
  train.samples[3].values[5] = std::nan("");
  TrainConfig cfg;
  cfg.epochs = 2;
  // NaN input passes validation of lengths but poisons the loss.
  try {
    train_benign(toy(Architecture::kInceptionTime, 2, 32), train, testing::ramp_dataset(4, 32, 6),
                 cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 0);
  }
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c;
  c.epochs = 7;
  c.seed = 3;
  EXPECT_EQ(TrainConfig::from_json(c.to_json()), c);
  EXPECT_THROW(TrainConfig::from_json({{"epochs", -1}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"batch_size", 0}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"learning_rate", "fast"}}), ConfigError);
}

TEST(NormDifference, SameSetsGiveZerosAndEntriesAreNonNegative) {
  ModelHandle m(toy(Architecture::kInceptionTime));
  testing::perturb_buffers(m, 2);
  const auto probes = m.default_probe_layers();
  const auto d = random_set(9, 3, 13);
  const auto zero = norm_difference_matrix(m, probes, d, d);
  ASSERT_EQ(zero.layers, probes);
  for (const auto& row : zero.values) {
    ASSERT_FALSE(row.empty());
    for (double v : row) EXPECT_EQ(v, 0.0);
  }
  const auto bd = poison_dataset(d, TriggerSpec::fixed_patch(6, 3.0), 0, true);
  const auto diff = norm_difference_matrix(m, probes, d, bd);
  double total = 0.0;
  for (const auto& row : diff.values) {
    for (double v : row) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
  }
  EXPECT_GT(total, 0.0);
}

TEST(NormDifference, MatchesPerSampleChannelNorms) {
  ModelHandle m(toy(Architecture::kMacnn));
  const auto probes = m.default_probe_layers();
  const auto clean = random_set(4, 3, 14);
  const auto bd = random_set(3, 3, 15);
  const auto diff = norm_difference_matrix(m, probes, clean, bd);
  ActivationProbe probe{probes, {}};
  for (std::size_t l = 0; l < probes.size(); ++l) {
    std::vector<double> a(diff.values[l].size(), 0.0), b(a.size(), 0.0);
    for (const auto& s : clean.samples) {
      const auto n = m.channel_norms(s.values, probe).at(probes[l]);
      for (std::size_t c = 0; c < a.size(); ++c) a[c] += n[c] / 4.0;
    }
    for (const auto& s : bd.samples) {
      const auto n = m.channel_norms(s.values, probe).at(probes[l]);
      for (std::size_t c = 0; c < b.size(); ++c) b[c] += n[c] / 3.0;
    }
    for (std::size_t c = 0; c < a.size(); ++c) {
      EXPECT_NEAR(diff.values[l][c], std::abs(b[c] - a[c]), 1e-12);
    }
  }
  EXPECT_THROW(norm_difference_matrix(m, probes, SeriesDataset{}, bd), InvalidDataset);
}

TEST(NormDifference, CsvIsLongFormat) {
  NormDifference d{{"a", "b"}, {{0.5, 1.0}, {2.0}}};
  const auto path = testing::temp_dir("norm_diff") / "norm_diff.csv";
  write_norm_difference_csv(d, path);
  const auto t = read_csv(path);
  EXPECT_EQ(t.header, (std::vector<std::string>{"layer", "channel", "value"}));
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[2], (std::vector<std::string>{"b", "0", "2"}));
  EXPECT_DOUBLE_EQ(d.layer_mean(0), 0.75);
}

TEST(ExportFeatures, OneRowPerSampleAndStable) {
  ModelHandle m(toy(Architecture::kLstmFcn));
  const auto d = random_set(70, 3, 16);
  const auto dir = testing::temp_dir("features");
  export_features(m, d, dir / "a.csv");
  export_features(m, d, dir / "b.csv");
  const auto t = read_csv(dir / "a.csv");
  EXPECT_EQ(t.rows.size(), 70u);
  EXPECT_EQ(t.header.size(), static_cast<std::size_t>(m.feature_dim()) + 3);
  const auto f = m.penultimate_features(d.samples[42].values);
  for (int c = 0; c < m.feature_dim(); ++c) {
    EXPECT_EQ(parse_double(t.rows[42][3 + c], 0), f[c]);
  }
  std::ifstream fa(dir / "a.csv"), fb(dir / "b.csv");
  const std::string sa((std::istreambuf_iterator<char>(fa)), {});
  const std::string sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
}

TEST(EvalReport, EvaluateAndJsonRoundTrip) {
  ModelHandle m(toy(Architecture::kInceptionTime));
  auto d = random_set(20, 3, 17);
  for (auto& s : d.samples) s.label = s.label == 2 ? 0 : s.label;
  const auto r = evaluate(m, d, TriggerSpec::fixed_patch(4), 1);
  EXPECT_EQ(r.n_clean_eval, 20);
  EXPECT_EQ(r.n_asr_eval, asr_denominator(d, 1));
  ASSERT_TRUE(r.attack_success_rate.has_value());
  EXPECT_TRUE(std::isnan(r.per_class_accuracy[2]));
  const auto back = EvalReport::from_json(r.to_json());
  EXPECT_EQ(back.clean_accuracy, r.clean_accuracy);
  EXPECT_EQ(back.attack_success_rate, r.attack_success_rate);
  EXPECT_TRUE(std::isnan(back.per_class_accuracy[2]));
  EXPECT_EQ(back.n_asr_eval, r.n_asr_eval);
  const auto no_trigger = evaluate(m, d, std::nullopt, 0);
  EXPECT_FALSE(no_trigger.attack_success_rate.has_value());
  EXPECT_EQ(no_trigger.n_asr_eval, 0);
}

}  // namespace
}  // namespace tsb
