// Copyright 2026 The optsep Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "optsep/cli.hpp"

namespace {

void ConfigureLogging() {
  const char* level = std::getenv("OPTSEP_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");
}

}  // namespace

int main(int argc, char** argv) {
  ConfigureLogging();
  CLI::App app{"Option-critic training with a Hellinger-distance regularizer"};
  app.require_subcommand(1);

  optsep::cli::TrainOptions train;
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  auto* train_cmd = app.add_subcommand("train", "train an agent into a run directory");
  train_cmd->add_option("--config", config_path, "JSON run configuration");
  train_cmd->add_option("--set", train.overrides, "override a config key (key=value)");
  auto* train_seed = train_cmd->add_option("--seed", seed, "random seed");
  train_cmd->add_option("--out", out_dir, "run directory");
  train_cmd->add_flag("--single-threaded", train.single_threaded, "collect rollouts on one thread");

  optsep::cli::EvalOptions eval;
  std::string checkpoint, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "play evaluation episodes from a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--episodes", eval.episodes, "number of episodes");
  eval_cmd->add_option("--seed", eval.seed, "random seed");
  eval_cmd->add_option("--out", eval_out, "output directory (default: checkpoint directory)");

  std::string run_dir;
  std::vector<std::string> which;
  auto* analyze_cmd = app.add_subcommand("analyze", "write analysis artifacts for a run");
  analyze_cmd->add_option("--run", run_dir, "run directory")->required();
  analyze_cmd->add_option("which", which, "usage|distance|histograms|latents|curve")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      if (!config_path.empty()) train.config_path = config_path;
      if (!out_dir.empty()) train.out = out_dir;
      if (train_seed->count() > 0) train.seed = seed;
      std::cout << optsep::cli::CmdTrain(train).string() << '\n';
    } else if (eval_cmd->parsed()) {
      eval.checkpoint = checkpoint;
      if (!eval_out.empty()) eval.out = eval_out;
      const auto summary = optsep::cli::CmdEval(eval);
      if (summary.empty) {
        std::cout << "episodes 0 (empty)\n";
      } else {
        std::cout << "episodes " << summary.episodes << " mean_return " << summary.mean_return
                  << " std_return " << summary.std_return << '\n';
      }
    } else if (analyze_cmd->parsed()) {
      for (const auto& w : which) {
        std::cout << optsep::cli::CmdAnalyze(run_dir, optsep::cli::ParseAnalysis(w)).string() << '\n';
      }
    }
  } catch (const optsep::Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
  return 0;
}
