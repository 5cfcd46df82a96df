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

#include "tsb/pipeline.hpp"

#include <cstdio>

#include "tsb/errors.hpp"
#include "tsb/table.hpp"
#include "tsb/version.hpp"

namespace tsb {

namespace fs = std::filesystem;

namespace {

void say(const Logger& log, const std::string& line) {
  if (log) log(line);
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string dataset_label(const SeriesDataset& d) {
  std::string name = d.name;
  for (const char* suffix : {"_TRAIN", "_TEST"}) {
    if (name.ends_with(suffix)) name.resize(name.size() - std::string_view(suffix).size());
  }
  return name;
}

std::string trigger_label(const TriggerSpec& t) {
  switch (t.kind()) {
    case TriggerKind::kFixedPatch:
      return "fixed";
    case TriggerKind::kRandomPatch:
      return "random";
    case TriggerKind::kPowerline:
      return "powerline" + std::to_string(t.wavelength());
  }
  return "fixed";
}

std::string summary(const EvalReport& r) {
  std::string s = "CA " + fixed3(r.clean_accuracy);
  if (r.attack_success_rate) s += " ASR " + fixed3(*r.attack_success_rate);
  return s;
}

SeriesDataset triggered_copy(const SeriesDataset& d, const TriggerSpec& trigger) {
  SeriesDataset out = d;
  out.name = d.name + "+trigger";
  for (auto& s : out.samples) s = apply_trigger(s, trigger);
  return out;
}

nlohmann::json tool_info(const std::string& stage) {
  return {{"tool", "tsbackdoor"},
          {"version", std::string(kVersion)},
          {"revision", std::string(kRevision)},
          {"stage", stage}};
}

}  // namespace

EvalReport evaluate_stage(const RunConfig& cfg, const Scenario& s, const ModelHandle& m,
                          const std::string& table, const std::string& setting,
                          const fs::path& dir) {
  const int k = cfg.attack.target_class;
  EvalReport r = evaluate(m, s.test, s.trigger, k, cfg.asr_include_target);
  const auto bd = triggered_copy(s.test, s.trigger);
  r.norm_diff = norm_difference_matrix(m, m.default_probe_layers(), s.test, bd);
  r.manifest = {{"table", table},
                {"setting", setting},
                {"dataset", dataset_label(s.train)},
                {"model", std::string(to_string(m.architecture()))},
                {"trigger", trigger_label(s.trigger)},
                {"target_class", k},
                {"asr_include_target", cfg.asr_include_target},
                {"seed", cfg.seed}};
  if (!dir.empty()) {
    fs::create_directories(dir);
    write_json(r.to_json(), dir / "eval.json");
    write_norm_difference_csv(*r.norm_diff, dir / "norm_diff.csv");
    SeriesDataset both = s.test;
    both.samples.insert(both.samples.end(), bd.samples.begin(), bd.samples.end());
    export_features(m, both, dir / "features.csv");
  }
  return r;
}

ModelHandle run_train_benign(const RunConfig& cfg, const Scenario& s, const Logger& log) {
  const fs::path dir = cfg.stage_dir("benign");
  say(log, "training benign " + std::string(to_string(s.model.architecture)) + " on " +
               dataset_label(s.train) + " for " + std::to_string(cfg.train.epochs) + " epochs");
  TrainResult r = train_benign(s.model, s.train, s.test, cfg.train, dir);
  const EvalReport e = evaluate_stage(cfg, s, r.last, "attack", "benign", dir);
  say(log, "benign (last epoch): " + summary(e));
  return std::move(r.last);
}

std::vector<SynthesisRecord> run_synthesize(const RunConfig& cfg, const Scenario& s,
                                            const ModelHandle& benign, const Logger& log) {
  if (s.external.empty()) throw ConfigError("data.external: required for synthesis");
  const fs::path dir = cfg.stage_dir("synthesis");
  const auto resized = resize_dataset(s.external, benign.input_length());
  AttackConfig keep = cfg.attack;
  keep.keep_failed_adversarials = true;
  auto all = synthesize_pseudo_dataset(benign, resized, keep);
  int succeeded = 0;
  std::vector<SynthesisRecord> kept;
  for (auto& r : all) {
    succeeded += r.attack_succeeded;
    if (r.attack_succeeded || cfg.attack.keep_failed_adversarials) kept.push_back(r);
  }
  fs::create_directories(dir);
  if (!kept.empty()) save_synthesis_archive(kept, dir / "synthesis.csv");
  auto manifest = tool_info("synthesize");
  manifest["external_dataset"] = s.external.name;
  manifest["attack"] = cfg.attack.to_json();
  manifest["synthesis"] = {{"attempted", all.size()},
                           {"succeeded", succeeded},
                           {"records_kept", kept.size()}};
  write_json(manifest, dir / "synthesis_manifest.json");
  say(log, "synthesized " + std::to_string(succeeded) + "/" + std::to_string(all.size()) +
               " successful targeted adversarials");
  return kept;
}

ModelHandle run_attack_stage(const RunConfig& cfg, const Scenario& s, const ModelHandle& benign,
                             const Logger& log) {
  if (s.external.empty()) throw ConfigError("data.external: required for the attack");
  const fs::path dir = cfg.stage_dir("attack");
  say(log, "trojaning with " + s.external.name + " for " + std::to_string(cfg.attack.epochs) +
               " epochs");
  AttackResult r = run_attack(benign, s.external, s.trigger, cfg.attack, dir);
  say(log, "adversarial synthesis: " + std::to_string(r.succeeded) + "/" +
               std::to_string(r.attempted) + " succeeded");
  const EvalReport e = evaluate_stage(cfg, s, r.trojaned, "attack", "trojaned", dir);
  say(log, "trojaned: " + summary(e));
  return std::move(r.trojaned);
}

std::vector<AblationVariant> ablation_variants(const AttackConfig& base) {
  std::vector<AblationVariant> out;
  AttackConfig full = base;
  full.bn_freeze = full.logits_alignment = full.use_adv_synthesis = true;
  out.push_back({"full", "full method", full});
  AttackConfig no_bn = full;
  no_bn.bn_freeze = false;
  out.push_back({"no_bn_freeze", "w/o BN freezing", no_bn});
  AttackConfig no_align = full;
  no_align.logits_alignment = false;
  out.push_back({"no_logits_alignment", "w/o logits alignment", no_align});
  AttackConfig no_adv = full;
  no_adv.use_adv_synthesis = false;
  out.push_back({"no_adv_synthesis", "w/o D_adv", no_adv});
  return out;
}

std::vector<EvalReport> run_ablation(const RunConfig& cfg, const Scenario& s,
                                     const ModelHandle& benign, const Logger& log) {
  if (s.external.empty()) throw ConfigError("data.external: required for the ablation");
  std::vector<EvalReport> out;
  for (const auto& v : ablation_variants(cfg.attack)) {
    const fs::path dir = cfg.stage_dir("ablation") / v.name;
    say(log, "ablation: " + v.setting);
    AttackResult r = run_attack(benign, s.external, s.trigger, v.attack, dir);
    out.push_back(evaluate_stage(cfg, s, r.trojaned, "ablation", v.setting, dir));
    say(log, v.setting + ": " + summary(out.back()));
  }
  return out;
}

DefenseOutcome run_defense_stage(const RunConfig& cfg, const Scenario& s,
                                 const ModelHandle& trojaned, const Logger& log) {
  const fs::path dir = cfg.stage_dir("defense");
  const SeriesDataset poisoned = build_defense_scenario(
      s.train, s.trigger, cfg.attack.target_class, cfg.poison_ratio, cfg.defense.seed);
  fs::create_directories(dir);
  save_ucr(poisoned, dir / "poisoned_train.tsv");
  DefenseOutcome out{trojaned, {}, {}, 0, 0};
  out.before = evaluate_stage(cfg, s, trojaned, "defense", "before defense", {});
  write_json(out.before.to_json(), dir / "eval_before.json");
  say(log, "before defense: " + summary(out.before));
  DefenseResult r = run_defense(trojaned, poisoned, cfg.defense, dir);
  out.sanitized = std::move(r.sanitized);
  out.toxic = r.isolation.toxic_indices.size();
  for (std::size_t i : r.isolation.toxic_indices) {
    out.triggered_in_toxic += poisoned.samples[i].provenance == Provenance::kTriggered;
  }
  say(log, "isolated " + std::to_string(out.toxic) + " toxic samples, " +
               std::to_string(out.triggered_in_toxic) + " of them triggered");
  out.after = evaluate_stage(cfg, s, out.sanitized, "defense", "after defense", {});
  write_json(out.after.to_json(), dir / "eval_after.json");
  say(log, "after defense: " + summary(out.after));
  return out;
}

std::vector<ReportRow> run_report(const RunConfig& cfg, const Logger& log) {
  std::vector<fs::path> sources{cfg.stage_dir("benign") / "eval.json",
                                cfg.stage_dir("attack") / "eval.json"};
  for (const auto& v : ablation_variants(cfg.attack)) {
    sources.push_back(cfg.stage_dir("ablation") / v.name / "eval.json");
  }
  sources.push_back(cfg.stage_dir("defense") / "eval_before.json");
  sources.push_back(cfg.stage_dir("defense") / "eval_after.json");

  std::vector<ReportRow> rows;
  for (const auto& p : sources) {
    if (!fs::is_regular_file(p)) continue;
    const EvalReport r = EvalReport::from_json(read_json(p));
    const auto& m = r.manifest;
    rows.push_back(make_row(m.value("table", ""), m.value("dataset", ""), m.value("model", ""),
                            m.value("trigger", ""), m.value("setting", ""), r,
                            m.value("seed", 0)));
    const std::string stage = p.parent_path().filename().string();
    if (r.norm_diff && (stage == "benign" || stage == "attack")) {
      write_heatmap_png(*r.norm_diff, cfg.output_dir / ("norm_diff_" + stage + ".png"));
    }
  }
  if (rows.empty()) throw Error("no stage results under " + cfg.output_dir.string());
  write_report_csv(rows, cfg.output_dir / "report.csv");
  say(log, "wrote " + (cfg.output_dir / "report.csv").string() + " (" +
               std::to_string(rows.size()) + " rows)");
  return rows;
}

void write_run_manifest(const RunConfig& cfg, const std::string& command) {
  auto m = tool_info(command);
  m["config"] = cfg.to_json();
  fs::create_directories(cfg.output_dir);
  write_json(m, cfg.output_dir / "manifest.json");
}

}  // namespace tsb
