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

#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "test_util.hpp"
#include "tsb/config.hpp"
#include "tsb/errors.hpp"
#include "tsb/pipeline.hpp"
#include "tsb/report.hpp"
#include "tsb/table.hpp"

namespace tsb {
namespace {

namespace fs = std::filesystem;
using testing::data_dir;
using testing::temp_dir;

nlohmann::json tiny_config(const fs::path& out) {
  return {{"data",
           {{"train", (data_dir() / "GunPoint_TRAIN.tsv").string()},
            {"test", (data_dir() / "GunPoint_TEST.tsv").string()},
            {"external", (data_dir() / "Coffee_TRAIN.tsv").string()}}},
          {"model", {{"architecture", "inception_time"}, {"filters", 2}, {"depth", 1},
                     {"kernel_size", 8}}},
          {"train", {{"epochs", 2}}},
          {"trigger", {{"kind", "fixed"}}},
          {"attack", {{"epochs", 2}, {"pgd_steps", 3}}},
          {"defense", {{"epochs", 2}}},
          {"output_dir", out.string()},
          {"seed", 4}};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tsb");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  fs::create_directories(dir);
  const fs::path p = dir / "config.json";
  write_json(j, p);
  return p;
}

std::string config_error(const nlohmann::json& j) {
  try {
    RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfig, DefaultsAndSeedInheritance) {
  auto j = tiny_config("/tmp/x");
  j["attack"]["seed"] = 11;
  const auto c = RunConfig::from_json(j);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.train.seed, 4u);
  EXPECT_EQ(c.defense.seed, 4u);
  EXPECT_EQ(c.attack.seed, 11u);
  EXPECT_EQ(c.model["seed"], 4);
  EXPECT_EQ(c.attack.pgd_step_size, 0.01);
  EXPECT_EQ(c.attack.lambda, 1.0);
  EXPECT_EQ(c.defense.r_percent, 5.0);
  EXPECT_EQ(c.poison_ratio, 0.1);
  EXPECT_FALSE(c.asr_include_target);
  EXPECT_EQ(c.benign_path(), fs::path("/tmp/x/benign/last.ckpt"));
  EXPECT_EQ(c.trojaned_path(), fs::path("/tmp/x/attack/trojaned.ckpt"));
}

TEST(RunConfig, ApplySeedOverridesEverySection) {
  auto c = RunConfig::from_json(tiny_config("/tmp/x"));
  c.apply_seed(9);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.attack.seed, 9u);
  EXPECT_EQ(c.defense.seed, 9u);
  EXPECT_EQ(c.model["seed"], 9);
}

TEST(RunConfig, JsonRoundTrip) {
  const auto c = RunConfig::from_json(tiny_config("/tmp/x"));
  const auto back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(RunConfig, RelativePathsResolveAgainstTheFile) {
  const auto dir = temp_dir("config_relative");
  fs::copy_file(data_dir() / "Coffee_TRAIN.tsv", dir / "a.tsv");
  fs::copy_file(data_dir() / "Coffee_TEST.tsv", dir / "b.tsv");
  const auto path = write_config(
      dir, {{"data", {{"train", "a.tsv"}, {"test", "b.tsv"}}}, {"output_dir", "out"}});
  const auto c = RunConfig::load(path);
  EXPECT_EQ(c.data.train, dir / "a.tsv");
  EXPECT_EQ(c.output_dir, dir / "out");
}

TEST(RunConfig, FieldLevelErrors) {
  auto j = tiny_config("/tmp/x");
  j["bogus"] = 1;
  EXPECT_NE(config_error(j).find("bogus"), std::string::npos);

  j = tiny_config("/tmp/x");
  j["data"].erase("train");
  EXPECT_NE(config_error(j).find("data.train"), std::string::npos);

  j = tiny_config("/tmp/x");
  j["data"]["test"] = "/no/such/file.tsv";
  EXPECT_NE(config_error(j).find("data.test"), std::string::npos);

  j = tiny_config("/tmp/x");
  j["model"]["architecture"] = "resnet";
  EXPECT_NE(config_error(j).find("model.architecture"), std::string::npos);

  j = tiny_config("/tmp/x");
  j["attack"]["epochs"] = "many";
  EXPECT_NE(config_error(j).find("epochs"), std::string::npos);

  j = tiny_config("/tmp/x");
  j["defense"]["r_percent"] = 150;
  EXPECT_NE(config_error(j).find("r_percent"), std::string::npos);

  j = tiny_config("/tmp/x");
  j["poison_ratio"] = 0;
  EXPECT_NE(config_error(j).find("poison_ratio"), std::string::npos);

  j = tiny_config("/tmp/x");
  j["seed"] = -1;
  EXPECT_NE(config_error(j).find("seed"), std::string::npos);

  j = tiny_config("/tmp/x");
  j["trigger"] = {{"amplitude", 1}};
  EXPECT_NE(config_error(j).find("trigger.kind"), std::string::npos);
}

TEST(RunConfig, ScenarioValidatesTargetClass) {
  auto j = tiny_config("/tmp/x");
  j["attack"]["target_class"] = 5;
  const auto c = RunConfig::from_json(j);
  EXPECT_THROW(load_scenario(c), ConfigError);
}

TEST(RunConfig, ScenarioSharesLabelMapping) {
  const auto s = load_scenario(RunConfig::from_json(tiny_config("/tmp/x")));
  EXPECT_EQ(s.test.class_labels, s.train.class_labels);
  EXPECT_EQ(s.model.input_length, 150);
  EXPECT_EQ(s.trigger.patch_len(), 15);
  EXPECT_FALSE(s.external.empty());
}

ReportRow sample_row(const std::string& setting, std::optional<double> asr) {
  EvalReport r;
  r.clean_accuracy = 0.9;
  r.attack_success_rate = asr;
  r.n_clean_eval = 20;
  r.n_asr_eval = asr ? 10 : 0;
  return make_row("attack", "BirdChicken", "inception_time", "fixed", setting, r, 3);
}

TEST(Report, CsvRoundTripAndIdempotence) {
  const auto dir = temp_dir("report_csv");
  const std::vector<ReportRow> rows{sample_row("benign", 0.0), sample_row("trojaned", 1.0 / 3),
                                    sample_row("w/o D_adv, \"raw\"", std::nullopt)};
  write_report_csv(rows, dir / "a.csv");
  EXPECT_EQ(read_report_csv(dir / "a.csv"), rows);
  write_report_csv(read_report_csv(dir / "a.csv"), dir / "b.csv");
  EXPECT_EQ(read_bytes(dir / "a.csv"), read_bytes(dir / "b.csv"));
  const auto table = read_csv(dir / "a.csv");
  EXPECT_EQ(table.rows[1][6], "90.0");
  EXPECT_EQ(table.rows[1][7], "33.3");
}

TEST(Report, HeatmapIsAPng) {
  const auto dir = temp_dir("report_png");
  NormDifference diff;
  diff.layers = {"a", "b"};
  diff.values = {{0.0, 1.0, 2.0}, {3.0}};
  write_heatmap_png(diff, dir / "h.png", 4);
  const std::string bytes = read_bytes(dir / "h.png");
  ASSERT_GT(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(1, 3), "PNG");
}

TEST(Pipeline, AblationVariantsFlipOneSwitchEach) {
  const auto v = ablation_variants(AttackConfig{});
  ASSERT_EQ(v.size(), 4u);
  EXPECT_TRUE(v[0].attack.bn_freeze && v[0].attack.logits_alignment &&
              v[0].attack.use_adv_synthesis);
  EXPECT_FALSE(v[1].attack.bn_freeze);
  EXPECT_FALSE(v[2].attack.logits_alignment);
  EXPECT_FALSE(v[3].attack.use_adv_synthesis);
  EXPECT_EQ(v[1].setting, "w/o BN freezing");
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  const auto unknown = cli({"frobnicate"});
  EXPECT_EQ(unknown.code, kExitUsage);
  EXPECT_NE(unknown.err.find("unknown subcommand"), std::string::npos);
  EXPECT_NE(unknown.err.find("train-benign"), std::string::npos);
  EXPECT_EQ(cli({"attack"}).code, kExitUsage);
  EXPECT_EQ(cli({"attack", "--config", "x.json", "--seed", "abc"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, MalformedConfigExitsTwoWithField) {
  const auto dir = temp_dir("cli_bad_config");
  auto j = tiny_config(dir / "out");
  j["train"]["epochs"] = -3;
  const auto r = cli({"train-benign", "--config", write_config(dir, j).string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("epochs"), std::string::npos);

  std::ofstream(dir / "broken.json") << "{\"data\": ";
  EXPECT_EQ(cli({"report", "--config", (dir / "broken.json").string()}).code, kExitUsage);
  EXPECT_EQ(cli({"report", "--config", (dir / "absent.json").string()}).code, kExitUsage);
}

TEST(Cli, MissingCheckpointIsARuntimeError) {
  const auto dir = temp_dir("cli_missing_ckpt");
  const auto r =
      cli({"attack", "--config", write_config(dir, tiny_config(dir / "out")).string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("benign checkpoint not found"), std::string::npos);
}

// Every subcommand on a tiny configuration, twice, with byte-level comparison.
TEST(Cli, EndToEndIsDeterministic) {
  const auto dir = temp_dir("cli_e2e");
  std::vector<fs::path> outs;
  for (const char* run : {"a", "b"}) {
    const fs::path out = dir / run;
    const auto config = write_config(dir / (std::string(run) + "_cfg"), tiny_config(out)).string();
    for (const char* cmd :
         {"train-benign", "synthesize", "attack", "ablate", "defend", "evaluate", "report"}) {
      const auto r = cli({cmd, "--config", config});
      ASSERT_EQ(r.code, kExitOk) << cmd << ": " << r.err;
    }
    outs.push_back(out);
  }
  for (const char* file :
       {"benign/last.ckpt", "attack/trojaned.ckpt", "defense/sanitized.ckpt", "report.csv",
        "synthesis/synthesis.csv", "ablation/no_bn_freeze/trojaned.ckpt", "defense/isolation.csv",
        "attack/norm_diff.csv", "attack/features.csv", "norm_diff_attack.png"}) {
    ASSERT_TRUE(fs::is_regular_file(outs[0] / file)) << file;
    EXPECT_EQ(read_bytes(outs[0] / file), read_bytes(outs[1] / file)) << file;
  }
  const auto rows = read_report_csv(outs[0] / "report.csv");
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0].setting, "benign");
  EXPECT_EQ(rows[1].setting, "trojaned");
  EXPECT_EQ(rows[0].dataset, "GunPoint");
  EXPECT_EQ(rows.back().setting, "after defense");
  const auto manifest = read_json(outs[0] / "manifest.json");
  EXPECT_EQ(manifest["stage"], "report");
  EXPECT_EQ(manifest["config"]["seed"], 4);
}

TEST(Cli, FlagsOverrideConfig) {
  const auto dir = temp_dir("cli_flags");
  const auto config = write_config(dir, tiny_config(dir / "ignored")).string();
  const fs::path out = dir / "override";
  ASSERT_EQ(cli({"train-benign", "--config", config, "--out", out.string(), "--seed", "7"}).code,
            kExitOk);
  const auto r = cli({"evaluate", "--config", config, "--out", out.string(), "--seed", "7",
                      "--asr-include-target"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("CA "), std::string::npos);
  EXPECT_NE(r.out.find("ASR "), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "ignored"));
  const auto manifest = read_json(out / "manifest.json");
  EXPECT_EQ(manifest["config"]["seed"], 7);
  EXPECT_EQ(manifest["config"]["evaluation"]["asr_include_target"], true);
  const auto eval = EvalReport::from_json(read_json(out / "evaluate" / "eval.json"));
  EXPECT_EQ(eval.n_asr_eval, eval.n_clean_eval);
}

}  // namespace
}  // namespace tsb
