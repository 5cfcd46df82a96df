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

// Stage runners shared by the command line tool and the acceptance suite.
// Every stage writes its artifacts under RunConfig::output_dir/<stage>.

#ifndef TSB_PIPELINE_HPP_
#define TSB_PIPELINE_HPP_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tsb/config.hpp"
#include "tsb/report.hpp"

namespace tsb {

// Progress lines; may be empty.
using Logger = std::function<void(const std::string&)>;

// Eval report of `m` on the test split with the scenario trigger, plus the
// rear-layer norm difference between triggered and clean test samples.
// With a non-empty dir, writes eval.json, norm_diff.csv and features.csv.
EvalReport evaluate_stage(const RunConfig& cfg, const Scenario& s, const ModelHandle& m,
                          const std::string& table, const std::string& setting,
                          const std::filesystem::path& dir);

// benign/: last.ckpt, best.ckpt, train_log.csv, train_manifest.json, eval.json
ModelHandle run_train_benign(const RunConfig& cfg, const Scenario& s, const Logger& log = {});

// synthesis/: synthesis.csv, synthesis_manifest.json
std::vector<SynthesisRecord> run_synthesize(const RunConfig& cfg, const Scenario& s,
                                            const ModelHandle& benign, const Logger& log = {});

// attack/: trojaned.ckpt, synthesis.csv, attack_manifest.json, eval.json, ...
ModelHandle run_attack_stage(const RunConfig& cfg, const Scenario& s, const ModelHandle& benign,
                             const Logger& log = {});

struct AblationVariant {
  std::string name;     // directory name
  std::string setting;  // table label
  AttackConfig attack;
};

// Full method followed by the three single-switch ablations.
std::vector<AblationVariant> ablation_variants(const AttackConfig& base);

// ablation/<variant>/ for every variant; returns the eval reports in order.
std::vector<EvalReport> run_ablation(const RunConfig& cfg, const Scenario& s,
                                     const ModelHandle& benign, const Logger& log = {});

struct DefenseOutcome {
  ModelHandle sanitized;
  EvalReport before;
  EvalReport after;
  std::size_t toxic = 0;
  std::size_t triggered_in_toxic = 0;
};

// defense/: poisoned_train.tsv, sanitized.ckpt, isolation.csv,
// defense_manifest.json, eval_before.json, eval_after.json
DefenseOutcome run_defense_stage(const RunConfig& cfg, const Scenario& s,
                                 const ModelHandle& trojaned, const Logger& log = {});

// Collects the stage eval reports found under output_dir into report.csv
// and renders heatmaps for the benign and trojaned norm differences.
std::vector<ReportRow> run_report(const RunConfig& cfg, const Logger& log = {});

// Resolved config snapshot with tool version, written as manifest.json.
void write_run_manifest(const RunConfig& cfg, const std::string& command);

}  // namespace tsb

#endif  // TSB_PIPELINE_HPP_
