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

// Subcommand implementations behind the optsep executable: train, eval and
// analyze. Each works on a run directory:
//
//   config.resolved.json   every knob, defaults materialized
//   manifest.json          tool version, seed, config hash
//   train_log.jsonl        one record per update
//   checkpoint_final.ckpt  (and checkpoint_<update>.ckpt when requested)
//   eval_trajectories.jsonl, eval_summary.json
//   usage.json, distance_report.json, intrinsic_histograms.csv,
//   intrinsic_summary.json, latents.csv, learning_curve.csv

#pragma once

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "optsep/analysis.hpp"
#include "optsep/checkpoint.hpp"
#include "optsep/error.hpp"
#include "optsep/run_config.hpp"
#include "optsep/trainer.hpp"

namespace optsep::cli {

inline constexpr const char* kToolVersion = "0.1.0";

namespace files {
inline constexpr const char* kResolvedConfig = "config.resolved.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kTrainLog = "train_log.jsonl";
inline constexpr const char* kFinalCheckpoint = "checkpoint_final.ckpt";
inline constexpr const char* kTrajectories = "eval_trajectories.jsonl";
inline constexpr const char* kEvalSummary = "eval_summary.json";
inline constexpr const char* kUsage = "usage.json";
inline constexpr const char* kDistance = "distance_report.json";
inline constexpr const char* kHistograms = "intrinsic_histograms.csv";
inline constexpr const char* kIntrinsicSummary = "intrinsic_summary.json";
inline constexpr const char* kLatents = "latents.csv";
inline constexpr const char* kCurve = "learning_curve.csv";
}  // namespace files

namespace detail {

inline void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  Require(static_cast<bool>(out), ErrorCode::kIoError, "write failed for " + path.string());
}

inline void RequireFile(const std::filesystem::path& path) {
  Require(std::filesystem::exists(path), ErrorCode::kMissingInput, "missing input file " + path.string());
}

inline std::string ConfigHash(const nlohmann::json& resolved) {
  const std::string text = ReproducibleConfig(resolved).dump();
  return optsep::detail::Crc32Hex(text);
}

inline nlohmann::json ActionToJson(const Action& a, bool discrete) {
  if (discrete) return a.index;
  return a.values;
}

}  // namespace detail

struct TrainOptions {
  std::optional<std::filesystem::path> config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  bool single_threaded = false;
};

// Returns the run directory.
inline std::filesystem::path CmdTrain(const TrainOptions& opts) {
  nlohmann::json file = opts.config_path ? ReadConfigFile(*opts.config_path) : nlohmann::json::object();
  std::vector<std::pair<std::string, nlohmann::json>> overrides;
  for (const auto& o : opts.overrides) overrides.push_back(ParseOverride(o));
  if (opts.seed) overrides.emplace_back("seed", *opts.seed);
  if (opts.out) overrides.emplace_back("out", opts.out->string());
  if (opts.single_threaded) overrides.emplace_back("single_threaded", true);
  const nlohmann::json resolved = ResolveConfig(file, overrides);
  const TrainConfig config = ToTrainConfig(resolved);
  const auto env = MakeEnvironment(resolved);

  const std::filesystem::path dir = resolved.at("out").get<std::string>();
  std::filesystem::create_directories(dir);
  detail::WriteText(dir / files::kResolvedConfig, resolved.dump(2) + "\n");
  const nlohmann::json manifest = {{"tool", "optsep"},
                                   {"version", kToolVersion},
                                   {"seed", config.seed},
                                   {"config_hash", detail::ConfigHash(resolved)}};
  detail::WriteText(dir / files::kManifest, manifest.dump(2) + "\n");

  std::ofstream log(dir / files::kTrainLog, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(log), ErrorCode::kIoError, "cannot write train log");
  const auto checkpoint_every = resolved.at("checkpoint_every").get<std::size_t>();
  const nlohmann::json ckpt_extra = {{"config", ReproducibleConfig(resolved)}};

  spdlog::info("training {} for {} steps (seed {}, hd_coef {})", env->name(), config.total_steps,
               config.seed, config.hd_coef);
  const TrainResult result = Train(config, *env, [&](const UpdateRecord& r, const AgentParams& p) {
    log << ToJson(r).dump() << '\n';
    if (checkpoint_every > 0 && (r.update + 1) % checkpoint_every == 0) {
      SaveCheckpoint(dir / ("checkpoint_" + std::to_string(r.update + 1) + ".ckpt"), p,
                     {config.seed, r.env_steps, ckpt_extra});
    }
    if ((r.update + 1) % 500 == 0) {
      spdlog::debug("update {} step {} total {:.5f} hd {:.4f}", r.update + 1, r.env_steps,
                    r.losses.total, r.losses.hd_reg_value);
    }
  });
  log.close();
  SaveCheckpoint(dir / files::kFinalCheckpoint, result.params, {config.seed, result.env_steps, ckpt_extra});
  spdlog::info("wrote {}", dir.string());
  return dir;
}

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::size_t episodes = 20;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out;  // defaults to the checkpoint's directory
  std::optional<double> epsilon;             // defaults to the training epsilon
};

struct EvalSummary {
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  bool empty = true;
};

inline EvalSummary CmdEval(const EvalOptions& opts) {
  detail::RequireFile(opts.checkpoint);
  const Checkpoint ckpt = LoadCheckpoint(opts.checkpoint);
  const auto& cfg = ckpt.metadata.extra.at("config");
  const auto env = MakeEnvironment(cfg);
  const double epsilon = opts.epsilon.value_or(cfg.at("epsilon").get<double>());
  const EvalResult eval = RunEvaluation(ckpt.params, *env, opts.episodes, opts.seed, epsilon);

  const std::filesystem::path dir = opts.out.value_or(opts.checkpoint.parent_path());
  std::filesystem::create_directories(dir);
  std::ofstream traj(dir / files::kTrajectories, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(traj), ErrorCode::kIoError, "cannot write trajectories");
  const bool discrete = ckpt.params.arch.action.discrete();
  for (const auto& s : eval.steps) {
    nlohmann::json row = {{"episode", s.episode}, {"t", s.t},
                          {"obs", s.obs}, {"option", s.option},
                          {"action", detail::ActionToJson(s.action, discrete)},
                          {"reward", s.reward}, {"intrinsic", s.intrinsic},
                          {"terminated", s.terminated_next}, {"done", s.done},
                          {"truncated", s.truncated}};
    traj << row.dump() << '\n';
  }
  traj.close();

  EvalSummary summary;
  summary.episodes = eval.episode_returns.size();
  summary.empty = eval.episode_returns.empty();
  if (!summary.empty) {
    double sum = 0.0;
    for (double r : eval.episode_returns) sum += r;
    summary.mean_return = sum / static_cast<double>(summary.episodes);
    double sq = 0.0;
    for (double r : eval.episode_returns) sq += (r - summary.mean_return) * (r - summary.mean_return);
    summary.std_return = std::sqrt(sq / static_cast<double>(summary.episodes));
  }
  nlohmann::json js = {{"episodes", summary.episodes},
                       {"empty", summary.empty},
                       {"seed", opts.seed},
                       {"epsilon", epsilon},
                       {"episode_returns", eval.episode_returns}};
  js["mean_return"] = summary.empty ? nlohmann::json() : nlohmann::json(summary.mean_return);
  js["std_return"] = summary.empty ? nlohmann::json() : nlohmann::json(summary.std_return);
  detail::WriteText(dir / files::kEvalSummary, js.dump(2) + "\n");
  return summary;
}

// Trajectory file contents, in file order.
inline std::vector<EvalStep> ReadTrajectories(const std::filesystem::path& path) {
  detail::RequireFile(path);
  std::ifstream in(path);
  std::vector<EvalStep> steps;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    EvalStep s;
    s.episode = j.at("episode").get<std::size_t>();
    s.t = j.at("t").get<std::size_t>();
    s.obs = j.at("obs").get<std::vector<double>>();
    s.option = j.at("option").get<std::size_t>();
    if (j.at("action").is_array()) {
      s.action = Action::Continuous(j.at("action").get<std::vector<double>>());
    } else {
      s.action = Action::Discrete(j.at("action").get<std::size_t>());
    }
    s.reward = j.at("reward").get<double>();
    s.intrinsic = j.at("intrinsic").get<std::map<std::string, double>>();
    s.terminated_next = j.at("terminated").get<bool>();
    s.done = j.at("done").get<bool>();
    s.truncated = j.at("truncated").get<bool>();
    steps.push_back(std::move(s));
  }
  return steps;
}

inline std::vector<UpdateRecord> ReadTrainLog(const std::filesystem::path& path) {
  detail::RequireFile(path);
  std::ifstream in(path);
  std::vector<UpdateRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) records.push_back(UpdateRecordFromJson(nlohmann::json::parse(line)));
  }
  return records;
}

enum class Analysis { kUsage, kDistance, kHistograms, kLatents, kCurve };

inline Analysis ParseAnalysis(const std::string& which) {
  if (which == "usage") return Analysis::kUsage;
  if (which == "distance") return Analysis::kDistance;
  if (which == "histograms") return Analysis::kHistograms;
  if (which == "latents") return Analysis::kLatents;
  if (which == "curve") return Analysis::kCurve;
  Fail(ErrorCode::kInvalidArgument,
       "unknown analysis '" + which + "' (expected usage|distance|histograms|latents|curve)");
}

// Writes the requested artifact into the run directory and returns its path.
inline std::filesystem::path CmdAnalyze(const std::filesystem::path& run_dir, Analysis which) {
  const auto traj_path = run_dir / files::kTrajectories;
  const auto ckpt_path = run_dir / files::kFinalCheckpoint;
  switch (which) {
    case Analysis::kUsage: {
      UsageTable table;
      std::string source;
      if (std::filesystem::exists(traj_path)) {
        const auto steps = ReadTrajectories(traj_path);
        detail::RequireFile(ckpt_path);
        const auto m = LoadCheckpoint(ckpt_path).params.arch.num_options;
        std::vector<std::size_t> options;
        for (const auto& s : steps) options.push_back(s.option);
        table = OptionUsage(options, m);
        source = files::kTrajectories;
      } else {
        const auto records = ReadTrainLog(run_dir / files::kTrainLog);
        Require(!records.empty(), ErrorCode::kEmptyLog, "train log has no updates");
        std::vector<std::size_t> counts(records.front().option_usage.size(), 0);
        for (const auto& r : records) {
          for (std::size_t o = 0; o < counts.size(); ++o) counts[o] += r.option_usage[o];
        }
        table = OptionUsageFromCounts(counts);
        source = files::kTrainLog;
      }
      auto js = ToJson(table);
      js["source"] = source;
      detail::WriteText(run_dir / files::kUsage, js.dump(2) + "\n");
      return run_dir / files::kUsage;
    }
    case Analysis::kDistance: {
      detail::RequireFile(ckpt_path);
      detail::RequireFile(traj_path);
      const auto params = LoadCheckpoint(ckpt_path).params;
      std::vector<std::vector<double>> states;
      for (auto& s : ReadTrajectories(traj_path)) states.push_back(std::move(s.obs));
      nlohmann::json js;
      js["HD"] = ToJson(PairwiseDistanceReport(params, states, DistanceKind::kHD));
      js["KLD"] = ToJson(PairwiseDistanceReport(params, states, DistanceKind::kKLD));
      detail::WriteText(run_dir / files::kDistance, js.dump(2) + "\n");
      return run_dir / files::kDistance;
    }
    case Analysis::kHistograms: {
      detail::RequireFile(ckpt_path);
      const auto steps = ReadTrajectories(traj_path);
      const auto ckpt = LoadCheckpoint(ckpt_path);
      const auto bins = ckpt.metadata.extra.at("config").at("histogram_bins").get<std::size_t>();
      const auto samples = IntrinsicSamplesFrom(steps);
      const auto table = IntrinsicRewardHistograms(samples, ckpt.params.arch.num_options, bins);
      detail::WriteText(run_dir / files::kHistograms, HistogramCsv(table));
      nlohmann::json summary = {{"labels", table.labels}, {"samples_per_option", table.samples_per_option}};
      for (std::size_t l = 0; l < table.labels.size(); ++l) {
        nlohmann::json means = nlohmann::json::array();
        for (double v : table.means[l]) means.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
        summary["means"][table.labels[l]] = means;
        summary["spread"][table.labels[l]] = OptionMeanSpread(table, table.labels[l], 0.01);
      }
      detail::WriteText(run_dir / files::kIntrinsicSummary, summary.dump(2) + "\n");
      return run_dir / files::kHistograms;
    }
    case Analysis::kLatents: {
      detail::RequireFile(ckpt_path);
      const auto params = LoadCheckpoint(ckpt_path).params;
      std::vector<std::vector<double>> states;
      std::vector<std::size_t> options, ids;
      for (auto& s : ReadTrajectories(traj_path)) {
        ids.push_back(states.size());
        options.push_back(s.option);
        states.push_back(std::move(s.obs));
      }
      detail::WriteText(run_dir / files::kLatents, ExportLatentsCsv(params, states, options, ids));
      return run_dir / files::kLatents;
    }
    case Analysis::kCurve: {
      const auto records = ReadTrainLog(run_dir / files::kTrainLog);
      std::vector<double> returns;
      for (const auto& r : records) returns.insert(returns.end(), r.episode_returns.begin(), r.episode_returns.end());
      std::size_t window = 200;
      if (std::filesystem::exists(run_dir / files::kResolvedConfig)) {
        std::ifstream in(run_dir / files::kResolvedConfig);
        window = nlohmann::json::parse(in).value("curve_window", window);
      }
      const auto curve = LearningCurve(returns, window);
      detail::WriteText(run_dir / files::kCurve, LearningCurveCsv(curve));
      return run_dir / files::kCurve;
    }
  }
  Fail(ErrorCode::kInvalidArgument, "unknown analysis");
}

}  // namespace optsep::cli
