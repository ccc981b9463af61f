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

// Helpers shared by the option-critic unit tests and the acceptance binary.

#pragma once

#include <array>
#include <random>
#include <vector>

#include "optsep/optioncritic.hpp"
#include "oracles.hpp"

namespace optsep::testing {

inline void Perturb(AgentParams& params, double scale, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  for (Eigen::Index i = 0; i < params.values.size(); ++i) params.values(i) += scale * n01(gen);
}

// Builds a freshly collected rollout for `params` on `prototype`.
inline Rollout SampleRollout(const AgentParams& params, const TrainConfig& config,
                             const Environment& prototype, std::uint64_t seed) {
  std::vector<Worker> workers;
  for (std::size_t w = 0; w < config.workers; ++w) workers.emplace_back(prototype.Clone(), DeriveSeed(seed, w));
  return CollectRollout(params, config, workers);
}

struct TermErrors {
  // policy, value, termination, entropy, hd_reg, total
  std::array<double, 6> error{};
  double worst() const { return *std::max_element(error.begin(), error.end()); }
};

inline constexpr std::array<const char*, 6> kTermNames = {"policy", "value", "termination",
                                                          "entropy", "hd_reg", "total"};

// Relative error of every analytic loss-term gradient against central
// differences of the same term with the constants held fixed.
inline TermErrors LossGradientErrors(const AgentParams& params, const Rollout& rollout,
                                     const TrainConfig& config) {
  const auto constants =
      ComputeLossConstants(params, rollout, NStepTargets(rollout, config.gamma, config.deliberation_cost));
  const auto result = ComputeLosses(params, rollout, constants, config, true);
  const std::array<const Eigen::VectorXd*, 6> analytic = {
      &result.gradients.policy,  &result.gradients.value,  &result.gradients.termination,
      &result.gradients.entropy, &result.gradients.hd_reg, &result.gradients.total};
  std::array<Eigen::VectorXd, 6> numeric;
  for (auto& n : numeric) n.resize(params.values.size());
  AgentParams probe = params;
  auto terms = [&](const Eigen::VectorXd& v) {
    probe.values = v;
    const auto b = EvaluateLoss(probe, rollout, constants, config);
    return std::array<double, 6>{b.policy_loss, b.value_loss, b.termination_loss,
                                 b.entropy,     b.hd_reg_value, b.total};
  };
  const double step = 1e-6;
  Eigen::VectorXd x = params.values;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x(i);
    x(i) = orig + step;
    const auto up = terms(x);
    x(i) = orig - step;
    const auto down = terms(x);
    x(i) = orig;
    for (int t = 0; t < 6; ++t) numeric[t](i) = (up[t] - down[t]) / (2.0 * step);
  }
  TermErrors errors;
  for (int t = 0; t < 6; ++t) errors.error[t] = MaxRelativeError(*analytic[t], numeric[t]);
  return errors;
}

}  // namespace optsep::testing
