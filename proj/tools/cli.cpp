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

#include "cli.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsb/errors.hpp"
#include "tsb/pipeline.hpp"
#include "tsb/table.hpp"
#include "tsb/version.hpp"

namespace tsb {

namespace fs = std::filesystem;

namespace {

struct Options {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  bool asr_include_target = false;
  std::optional<fs::path> checkpoint;  // evaluate only
};

RunConfig resolve(const Options& o) {
  RunConfig cfg = RunConfig::load(o.config);
  if (o.seed) cfg.apply_seed(*o.seed);
  if (o.out) cfg.output_dir = fs::absolute(*o.out);
  if (o.asr_include_target) cfg.asr_include_target = true;
  return cfg;
}

ModelHandle load_for(const fs::path& path, const Scenario& s, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw Error(std::string(what) + " checkpoint not found: " + path.string());
  }
  return load_checkpoint(path, {s.model.architecture, s.model.num_classes, s.model.input_length});
}

void print_report(std::ostream& out, const EvalReport& r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "CA %.4f (n=%d)\n", r.clean_accuracy, r.n_clean_eval);
  out << buf;
  if (r.attack_success_rate) {
    std::snprintf(buf, sizeof(buf), "ASR %.4f (n=%d)\n", *r.attack_success_rate, r.n_asr_eval);
    out << buf;
  }
}

int dispatch(const std::string& command, const Options& o, std::ostream& out,
             std::ostream& err) {
  const Logger log = [&err](const std::string& line) { err << "[tsb] " << line << '\n'; };
  const RunConfig cfg = resolve(o);
  write_run_manifest(cfg, command);
  if (command == "report") {
    const auto rows = run_report(cfg, log);
    out << (cfg.output_dir / "report.csv").string() << '\n';
    return kExitOk;
  }
  const Scenario s = load_scenario(cfg);
  if (command == "train-benign") {
    run_train_benign(cfg, s, log);
  } else if (command == "synthesize") {
    run_synthesize(cfg, s, load_for(cfg.benign_path(), s, "benign"), log);
  } else if (command == "attack") {
    const ModelHandle m = run_attack_stage(cfg, s, load_for(cfg.benign_path(), s, "benign"), log);
    print_report(out, evaluate(m, s.test, s.trigger, cfg.attack.target_class,
                               cfg.asr_include_target));
  } else if (command == "ablate") {
    run_ablation(cfg, s, load_for(cfg.benign_path(), s, "benign"), log);
  } else if (command == "defend") {
    const DefenseOutcome d =
        run_defense_stage(cfg, s, load_for(cfg.trojaned_path(), s, "trojaned"), log);
    print_report(out, d.after);
  } else if (command == "evaluate") {
    fs::path path = o.checkpoint.value_or(cfg.trojaned_path());
    if (!o.checkpoint && !fs::is_regular_file(path)) path = cfg.benign_path();
    const ModelHandle m = load_for(path, s, "evaluated");
    const EvalReport r =
        evaluate_stage(cfg, s, m, "evaluate", path.stem().string(), cfg.stage_dir("evaluate"));
    print_report(out, r);
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Data-free backdoor attack and unlearning defense for time-series classifiers",
               "tsb"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Options o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"train-benign", "Train the benign victim model"},
      {"synthesize", "Synthesize adversarial pseudo-samples from the external dataset"},
      {"attack", "Insert the backdoor into the benign model"},
      {"defend", "Isolate toxic samples and unlearn the backdoor"},
      {"evaluate", "Report CA and ASR of a checkpoint"},
      {"report", "Collect stage results into report.csv and heatmaps"},
      {"ablate", "Run the full method and its three ablations"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "Run configuration (JSON)")->required();
    sub->add_option("--seed", o.seed, "Override every seed in the configuration");
    sub->add_option("--out", o.out, "Override output_dir");
    sub->add_flag("--asr-include-target", o.asr_include_target,
                  "Count true-target samples in the ASR denominator");
    if (name == "evaluate") {
      sub->add_option("--checkpoint", o.checkpoint,
                      "Checkpoint to evaluate (default: trojaned, else benign)");
    }
  }

  if (argc > 1 && argv[1][0] != '-') {
    bool known = false;
    for (const auto& c : commands) known = known || c.first == argv[1];
    if (!known) {
      err << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
      return kExitUsage;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, o, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace tsb
