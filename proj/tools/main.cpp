// Copyright 2026 The evskill Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// evskill command-line entry point.
//
// Exit codes: 0 success, 1 other failure, 2 config error, 3 missing
// dependency, 4 numerical failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "evskill/cli/config.hpp"
#include "evskill/cli/pipeline.hpp"
#include "evskill/errors.hpp"

namespace {

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string preset;
  bool quiet = false;
};

evskill::cli::RunConfig load_config(const GlobalFlags& g) {
  evskill::cli::Assignments a;
  if (!g.config_path.empty()) a = evskill::cli::read_config_file(g.config_path);
  if (g.seed) a.emplace_back("seed", std::to_string(*g.seed));
  std::string out = g.out_dir;
  if (out.empty()) {
    if (const char* env = std::getenv("EVSKILL_OUT")) out = env;
  }
  if (!out.empty()) a.emplace_back("out_dir", out);
  // Flags win over the file: drop earlier duplicates.
  evskill::cli::Assignments dedup;
  for (auto it = a.rbegin(); it != a.rend(); ++it) {
    bool seen = false;
    for (const auto& d : dedup) seen = seen || d.first == it->first;
    if (!seen) dedup.insert(dedup.begin(), *it);
  }
  std::optional<std::string> preset;
  if (!g.preset.empty()) preset = g.preset;
  return evskill::cli::build_config(dedup, preset);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evskill: event-based skill learning on synthetic demonstrations"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config_path, "config file (key = value, [sections])");
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--out", g.out_dir, "output directory (default: EVSKILL_OUT or ./run)");
  app.add_option("--preset", g.preset, "desk or paper-shape")->check(CLI::IsMember({"desk", "paper-shape"}));
  app.add_flag("--quiet", g.quiet, "no progress output");

  std::vector<std::pair<std::string, CLI::App*>> stage_cmds;
  for (const auto& s : evskill::cli::stage_names()) {
    stage_cmds.emplace_back(s, app.add_subcommand(s, "run the " + s + " stage"));
  }
  auto* pipeline = app.add_subcommand("pipeline", "run every stage in order");
  std::vector<std::string> skip;
  bool resume = false;
  pipeline->add_option("--skip", skip, "stage to skip (repeatable)");
  pipeline->add_flag("--resume", resume, "skip stages whose manifest matches the config and seed");
  auto* inspect = app.add_subcommand("inspect", "summarise a checkpoint or corpus file");
  std::string inspect_path;
  bool with_labels = false;
  inspect->add_option("path", inspect_path, "artifact path")->required();
  inspect->add_flag("--with-labels", with_labels, "also print sidecar motif labels");
  auto* show = app.add_subcommand("show-config", "print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (inspect->parsed()) {
      std::cout << evskill::cli::inspect_artifact(inspect_path, with_labels).dump(2) << '\n';
      return 0;
    }
    const auto cfg = load_config(g);
    evskill::cli::PipelineOptions opts;
    opts.log = g.quiet ? nullptr : &std::cerr;
    if (show->parsed()) {
      std::cout << cfg.to_json().dump(2) << '\n';
      return 0;
    }
    if (pipeline->parsed()) {
      opts.skip.insert(skip.begin(), skip.end());
      opts.resume = resume;
      evskill::cli::run_pipeline(cfg, opts);
      return 0;
    }
    for (const auto& [name, cmd] : stage_cmds) {
      if (cmd->parsed()) evskill::cli::run_stage(name, cfg, opts);
    }
    return 0;
  } catch (const evskill::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const evskill::MissingDependency& e) {
    std::cerr << "missing dependency: " << e.what() << '\n';
    return 3;
  } catch (const evskill::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
