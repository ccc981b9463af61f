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

// Synchronous multi-worker trainer and the evaluation runner.

#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "optsep/envs.hpp"
#include "optsep/error.hpp"
#include "optsep/network.hpp"
#include "optsep/optioncritic.hpp"
#include "optsep/rmsprop.hpp"

namespace optsep {

inline Architecture MakeArchitecture(const TrainConfig& config, const EnvSpec& spec) {
  Architecture arch;
  arch.input_dim = spec.observation_dim;
  arch.hidden = config.hidden;
  arch.activation = config.activation;
  arch.num_options = config.num_options;
  arch.action = spec.action;
  arch.policy_floor = config.p_min;
  arch.Validate();
  return arch;
}

struct UpdateRecord {
  std::size_t update = 0;
  std::uint64_t env_steps = 0;  // after this update
  LossBreakdown losses;
  double grad_norm = 0.0;
  std::vector<double> episode_returns;          // raw, episodes finished during the rollout
  std::vector<double> episode_returns_clipped;  // sum of sign(r)
  std::vector<std::size_t> episode_lengths;
  std::vector<std::size_t> option_usage;  // env steps per active option
  std::size_t option_switches = 0;
};

inline nlohmann::json ToJson(const UpdateRecord& r) {
  return {
      {"update", r.update},
      {"step", r.env_steps},
      {"losses",
       {{"policy", r.losses.policy_loss},
        {"value", r.losses.value_loss},
        {"termination", r.losses.termination_loss},
        {"entropy", r.losses.entropy},
        {"hd_reg", r.losses.hd_reg_value},
        {"total", r.losses.total}}},
      {"grad_norm", r.grad_norm},
      {"episode_returns", r.episode_returns},
      {"episode_returns_clipped", r.episode_returns_clipped},
      {"episode_lengths", r.episode_lengths},
      {"option_usage", r.option_usage},
      {"option_switches", r.option_switches},
      {"hd_reg", r.losses.hd_reg_value},
  };
}

inline UpdateRecord UpdateRecordFromJson(const nlohmann::json& j) {
  UpdateRecord r;
  r.update = j.at("update").get<std::size_t>();
  r.env_steps = j.at("step").get<std::uint64_t>();
  const auto& l = j.at("losses");
  r.losses = {l.at("policy").get<double>(), l.at("value").get<double>(),
              l.at("termination").get<double>(), l.at("entropy").get<double>(),
              l.at("hd_reg").get<double>(), l.at("total").get<double>()};
  r.grad_norm = j.at("grad_norm").get<double>();
  r.episode_returns = j.at("episode_returns").get<std::vector<double>>();
  r.episode_returns_clipped = j.at("episode_returns_clipped").get<std::vector<double>>();
  r.episode_lengths = j.at("episode_lengths").get<std::vector<std::size_t>>();
  r.option_usage = j.at("option_usage").get<std::vector<std::size_t>>();
  r.option_switches = j.at("option_switches").get<std::size_t>();
  return r;
}

struct TrainResult {
  AgentParams params;
  std::vector<UpdateRecord> updates;
  std::uint64_t env_steps = 0;
};

using UpdateCallback = std::function<void(const UpdateRecord&, const AgentParams&)>;

inline std::vector<Worker> MakeWorkers(const Environment& prototype, std::size_t count,
                                       std::uint64_t seed) {
  std::vector<Worker> workers;
  workers.reserve(count);
  for (std::size_t w = 0; w < count; ++w) workers.emplace_back(prototype.Clone(), DeriveSeed(seed, 1000 + w));
  return workers;
}

// collect -> targets -> losses -> RMSprop, repeated for total_steps / (W n)
// updates. Results depend only on the config and environment: workers own
// their random streams, so threaded and single-threaded runs agree.
inline TrainResult Train(const TrainConfig& config, const Environment& prototype,
                         const UpdateCallback& on_update = {}) {
  config.Validate();
  const Architecture arch = MakeArchitecture(config, prototype.spec());
  TrainResult result{InitParams(arch, config.seed), {}, 0};
  std::vector<Worker> workers = MakeWorkers(prototype, config.workers, config.seed);
  RmsPropState optimizer;
  const std::uint64_t per_update = config.workers * config.n_steps;
  const std::uint64_t num_updates = config.total_steps / per_update;

  for (std::uint64_t u = 0; u < num_updates; ++u) {
    const Rollout rollout = CollectRollout(result.params, config, workers);
    auto targets = NStepTargets(rollout, config.gamma, config.deliberation_cost);
    const LossResult loss = ComputeLosses(result.params, rollout, std::move(targets), config);

    UpdateRecord record;
    record.update = static_cast<std::size_t>(u);
    record.losses = loss.breakdown;
    record.grad_norm = loss.gradients.total.norm();
    if (!std::isfinite(loss.breakdown.total) || !loss.gradients.total.allFinite()) {
      Fail(ErrorCode::kNumericalFailure,
           "non-finite loss or gradient at update " + std::to_string(u) + " (policy " +
               std::to_string(loss.breakdown.policy_loss) + ", value " +
               std::to_string(loss.breakdown.value_loss) + ", termination " +
               std::to_string(loss.breakdown.termination_loss) + ", entropy " +
               std::to_string(loss.breakdown.entropy) + ", hd " +
               std::to_string(loss.breakdown.hd_reg_value) + ")");
    }
    RmsPropStep(result.params.values, loss.gradients.total, config.lr, config.rmsprop_smoothing,
                optimizer, config.rmsprop_epsilon);
    Require(result.params.AllFinite(), ErrorCode::kNumericalFailure,
            "parameters became non-finite at update " + std::to_string(u));

    result.env_steps += per_update;
    record.env_steps = result.env_steps;
    record.option_usage.assign(config.num_options, 0);
    for (std::size_t w = 0; w < rollout.workers; ++w) {
      for (std::size_t t = 0; t < rollout.n_steps; ++t) {
        const Transition& tr = rollout.at(w, t);
        ++record.option_usage[tr.option];
        if (!tr.done && !tr.truncated && tr.next_option != tr.option) ++record.option_switches;
      }
    }
    for (const auto& e : rollout.finished_episodes) {
      record.episode_returns.push_back(e.raw_return);
      record.episode_returns_clipped.push_back(e.clipped_return);
      record.episode_lengths.push_back(e.length);
    }
    if (on_update) on_update(record, result.params);
    result.updates.push_back(std::move(record));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalStep {
  std::size_t episode = 0;
  std::size_t t = 0;
  std::vector<double> obs;
  std::size_t option = 0;
  Action action;
  double reward = 0.0;
  std::map<std::string, double> intrinsic;
  bool terminated_next = false;
  bool done = false;
  bool truncated = false;
};

struct EvalResult {
  std::vector<EvalStep> steps;
  std::vector<double> episode_returns;
};

// Plays full episodes with the call-and-return policy: epsilon-greedy over
// options, stochastic intra-option policies.
inline EvalResult RunEvaluation(const AgentParams& params, const Environment& prototype,
                                std::size_t episodes, std::uint64_t seed, double epsilon) {
  TrainConfig config;
  config.num_options = params.arch.num_options;
  config.epsilon = epsilon;
  config.single_threaded = true;
  Worker worker(prototype.Clone(), DeriveSeed(seed, 7));
  EvalResult result;
  std::vector<Transition> buffer;
  std::vector<EpisodeSummary> finished;
  std::size_t t = 0;
  while (result.episode_returns.size() < episodes) {
    buffer.clear();
    finished.clear();
    worker.Collect(params, config, 1, buffer, finished);
    Transition& tr = buffer.front();
    EvalStep step;
    step.episode = result.episode_returns.size();
    step.t = t++;
    step.obs = std::move(tr.obs);
    step.option = tr.option;
    step.action = std::move(tr.action);
    step.reward = tr.raw_reward;
    step.intrinsic = std::move(tr.intrinsic);
    step.terminated_next = tr.terminated_next;
    step.done = tr.done;
    step.truncated = tr.truncated;
    result.steps.push_back(std::move(step));
    if (!finished.empty()) {
      result.episode_returns.push_back(finished.front().raw_return);
      t = 0;
    }
  }
  return result;
}

}  // namespace optsep
