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

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "optsep/distances.hpp"
#include "optsep/envs.hpp"
#include "optsep/error.hpp"
#include "optsep/network.hpp"
#include "optsep/rng.hpp"

namespace optsep {

struct TrainConfig {
  double gamma = 0.99;
  std::size_t num_options = 4;
  double epsilon = 0.01;  // exploration of the policy over options
  std::size_t workers = 16;
  std::size_t n_steps = 5;
  std::size_t total_steps = 200000;  // environment steps summed over workers
  double lr = 0.0007;
  double rmsprop_smoothing = 0.99;
  double rmsprop_epsilon = 1e-5;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double deliberation_cost = 0.01;
  double hd_coef = 0.007;
  double p_min = 1e-4;
  bool reward_clip = false;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kTanh;
  bool single_threaded = false;

  void Validate() const {
    auto nonneg = [](double v, const char* name) {
      Require(v >= 0.0 && std::isfinite(v), ErrorCode::kInvalidArgument,
              std::string(name) + " must be finite and >= 0");
    };
    Require(gamma >= 0.0 && gamma < 1.0, ErrorCode::kInvalidArgument, "gamma must be in [0, 1)");
    Require(num_options >= 1, ErrorCode::kInvalidArgument, "num_options must be >= 1");
    Require(epsilon >= 0.0 && epsilon <= 1.0, ErrorCode::kInvalidArgument, "epsilon must be in [0, 1]");
    Require(workers >= 1 && n_steps >= 1, ErrorCode::kInvalidArgument, "workers and n_steps must be >= 1");
    nonneg(lr, "lr");
    Require(rmsprop_smoothing >= 0.0 && rmsprop_smoothing < 1.0, ErrorCode::kInvalidArgument,
            "rmsprop_smoothing must be in [0, 1)");
    nonneg(rmsprop_epsilon, "rmsprop_epsilon");
    nonneg(value_coef, "value_coef");
    nonneg(entropy_coef, "entropy_coef");
    nonneg(deliberation_cost, "deliberation_cost");
    nonneg(hd_coef, "hd_coef");
    nonneg(p_min, "p_min");
  }
};

// ---------------------------------------------------------------------------
// Call-and-return primitives.

// Greedy option with probability 1 - epsilon, otherwise uniform. Ties go to
// the lowest index.
inline std::size_t SelectOption(std::span<const double> q_omega, double epsilon, Rng& rng) {
  Require(!q_omega.empty(), ErrorCode::kInvalidArgument, "no options to select from");
  if (epsilon > 0.0 && rng.Uniform() < epsilon) return rng.Index(q_omega.size());
  return static_cast<std::size_t>(std::max_element(q_omega.begin(), q_omega.end()) - q_omega.begin());
}

inline bool ShouldTerminate(double beta, Rng& rng) { return rng.Uniform() < beta; }

// U(w, s') = (1 - beta) Q(s', w) + beta (V(s') - c), with V(s') = max_w Q(s', w).
inline double OptionValueUponArrival(std::span<const double> q_next, double beta_next,
                                     std::size_t option, double deliberation_cost) {
  Require(option < q_next.size(), ErrorCode::kInvalidArgument, "option index out of range");
  const double v = *std::max_element(q_next.begin(), q_next.end());
  return (1.0 - beta_next) * q_next[option] + beta_next * (v - deliberation_cost);
}

// ---------------------------------------------------------------------------
// Rollouts.

struct Transition {
  std::vector<double> obs;
  std::size_t option = 0;
  Action action;
  double log_prob = 0.0;
  double reward = 0.0;      // learning reward, sign-clipped when configured
  double raw_reward = 0.0;
  std::map<std::string, double> intrinsic;
  std::vector<double> next_obs;
  std::vector<double> q_next;  // Q_Omega(s', .) under the collection snapshot
  double beta_next = 0.0;      // beta_option(s')
  bool terminated_next = false;  // the termination draw at s' fired
  std::size_t next_option = 0;   // option active at s' (meaningless when done)
  bool done = false;
  bool truncated = false;
};

struct EpisodeSummary {
  double raw_return = 0.0;
  double clipped_return = 0.0;
  std::size_t length = 0;
};

struct Rollout {
  std::size_t workers = 0;
  std::size_t n_steps = 0;
  std::vector<Transition> transitions;  // worker-major: index w * n_steps + t
  std::vector<double> bootstrap;        // U(option, s_last) per worker
  std::vector<EpisodeSummary> finished_episodes;

  const Transition& at(std::size_t worker, std::size_t t) const {
    return transitions[worker * n_steps + t];
  }
};

namespace detail {

inline double ClipReward(double r) { return static_cast<double>((r > 0.0) - (r < 0.0)); }

struct SampledAction {
  Action action;
  double log_prob = 0.0;
};

inline SampledAction SampleAction(const ProbDist& dist, Rng& rng) {
  if (const auto* cat = std::get_if<Categorical>(&dist)) {
    const double u = rng.Uniform();
    double cumulative = 0.0;
    std::size_t chosen = cat->size() - 1;
    for (std::size_t i = 0; i < cat->size(); ++i) {
      cumulative += (*cat)[i];
      if (u < cumulative) {
        chosen = i;
        break;
      }
    }
    return {Action::Discrete(chosen), std::log((*cat)[chosen])};
  }
  const auto& g = std::get<DiagGaussian>(dist);
  std::vector<double> a(g.size());
  double log_prob = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double noise = rng.Normal();
    a[j] = g.mean()[j] + g.stddev(j) * noise;
    log_prob += -0.5 * noise * noise - g.log_std()[j] - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return {Action::Continuous(std::move(a)), log_prob};
}

}  // namespace detail

// One worker's private environment plus its call-and-return state.
class Worker {
 public:
  Worker(std::unique_ptr<Environment> env, std::uint64_t seed) : env_(std::move(env)), rng_(seed) {
    obs_ = env_->Reset(rng_.NextSeed());
  }

  Worker(const Worker& other)
      : env_(other.env_->Clone()),
        rng_(other.rng_),
        obs_(other.obs_),
        option_(other.option_),
        has_option_(other.has_option_),
        episode_(other.episode_) {}

  // Runs n steps against a fixed parameter snapshot. Each active option
  // persists until its termination draw fires or the episode ends.
  void Collect(const AgentParams& params, const TrainConfig& config, std::size_t n_steps,
               std::vector<Transition>& out, std::vector<EpisodeSummary>& finished) {
    NetworkOutputs current = Evaluate(params, obs_);
    for (std::size_t t = 0; t < n_steps; ++t) {
      if (!has_option_) {
        option_ = SelectOption(current.q_omega, config.epsilon, rng_);
        has_option_ = true;
      }
      Transition tr;
      tr.obs = obs_;
      tr.option = option_;
      auto sampled = detail::SampleAction(current.policies[option_], rng_);
      tr.action = std::move(sampled.action);
      tr.log_prob = sampled.log_prob;

      StepResult step = env_->Step(tr.action);
      tr.raw_reward = step.reward;
      tr.reward = config.reward_clip ? detail::ClipReward(step.reward) : step.reward;
      tr.intrinsic = std::move(step.intrinsic);
      tr.done = step.done;
      tr.truncated = step.truncated;
      tr.next_obs = step.obs;
      episode_.raw_return += tr.raw_reward;
      episode_.clipped_return += detail::ClipReward(tr.raw_reward);
      ++episode_.length;

      if (!tr.done) {
        NetworkOutputs next = Evaluate(params, tr.next_obs);
        tr.q_next = next.q_omega;
        tr.beta_next = next.beta[option_];
        current = std::move(next);
      } else {
        tr.q_next.assign(config.num_options, 0.0);
      }

      if (tr.done || tr.truncated) {
        finished.push_back(episode_);
        episode_ = {};
        obs_ = env_->Reset(rng_.NextSeed());
        has_option_ = false;
        tr.next_option = option_;
        current = Evaluate(params, obs_);
      } else {
        obs_ = tr.next_obs;
        tr.terminated_next = ShouldTerminate(tr.beta_next, rng_);
        if (tr.terminated_next) option_ = SelectOption(tr.q_next, config.epsilon, rng_);
        tr.next_option = option_;
      }
      out.push_back(std::move(tr));
    }
  }

  const Environment& env() const { return *env_; }

 private:
  std::unique_ptr<Environment> env_;
  Rng rng_;
  std::vector<double> obs_;
  std::size_t option_ = 0;
  bool has_option_ = false;
  EpisodeSummary episode_;
};

inline Rollout CollectRollout(const AgentParams& params, const TrainConfig& config,
                              std::vector<Worker>& workers) {
  const std::size_t w_count = workers.size();
  const std::size_t n = config.n_steps;
  std::vector<std::vector<Transition>> per_worker(w_count);
  std::vector<std::vector<EpisodeSummary>> episodes(w_count);
  auto run = [&](std::size_t w) {
    per_worker[w].reserve(n);
    workers[w].Collect(params, config, n, per_worker[w], episodes[w]);
  };
  if (config.single_threaded || w_count == 1) {
    for (std::size_t w = 0; w < w_count; ++w) run(w);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(w_count);
    for (std::size_t w = 0; w < w_count; ++w) threads.emplace_back(run, w);
  }

  Rollout rollout;
  rollout.workers = w_count;
  rollout.n_steps = n;
  rollout.transitions.reserve(w_count * n);
  for (std::size_t w = 0; w < w_count; ++w) {
    for (auto& tr : per_worker[w]) rollout.transitions.push_back(std::move(tr));
    for (const auto& e : episodes[w]) rollout.finished_episodes.push_back(e);
    const Transition& last = rollout.transitions.back();
    rollout.bootstrap.push_back(
        last.done ? 0.0
                  : OptionValueUponArrival(last.q_next, last.beta_next, last.option,
                                           config.deliberation_cost));
  }
  return rollout;
}

// Backward recursion per worker. A terminal step ends the recursion; an
// option change, a truncation or the end of the rollout seeds it with
// U(option, s') from the collection snapshot.
inline std::vector<double> NStepTargets(const Rollout& rollout, double gamma,
                                        double deliberation_cost) {
  std::vector<double> targets(rollout.transitions.size(), 0.0);
  for (std::size_t w = 0; w < rollout.workers; ++w) {
    double next_target = 0.0;
    for (std::size_t t = rollout.n_steps; t-- > 0;) {
      const Transition& tr = rollout.at(w, t);
      double g;
      if (tr.done) {
        g = tr.reward;
      } else if (tr.truncated || t + 1 == rollout.n_steps || tr.next_option != tr.option) {
        g = tr.reward + gamma * OptionValueUponArrival(tr.q_next, tr.beta_next, tr.option,
                                                       deliberation_cost);
      } else {
        g = tr.reward + gamma * next_target;
      }
      targets[w * rollout.n_steps + t] = g;
      next_target = g;
    }
  }
  return targets;
}

// ---------------------------------------------------------------------------
// Losses.

struct LossBreakdown {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double termination_loss = 0.0;
  double entropy = 0.0;
  double hd_reg_value = 0.0;
  double total = 0.0;
};

// Quantities that enter the loss as constants (no gradient flows through
// them): targets, intra-option advantages and termination advantages.
struct LossConstants {
  std::vector<double> targets;
  std::vector<double> advantages;              // G_t - Q(s_t, w_t)
  std::vector<double> termination_advantages;  // Q(s', w) - V(s') for arrival states
};

struct LossGradients {
  Eigen::VectorXd total;
  // Gradients of the unweighted terms; filled when requested.
  Eigen::VectorXd policy, value, termination, entropy, hd_reg;
};

namespace detail {

inline Eigen::MatrixXd StackObs(const Rollout& rollout, bool next) {
  const auto& first = next ? rollout.transitions.front().next_obs : rollout.transitions.front().obs;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(first.size()),
                    static_cast<Eigen::Index>(rollout.transitions.size()));
  for (std::size_t i = 0; i < rollout.transitions.size(); ++i) {
    const auto& o = next ? rollout.transitions[i].next_obs : rollout.transitions[i].obs;
    for (std::size_t j = 0; j < o.size(); ++j) {
      x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = o[j];
    }
  }
  return x;
}

enum Term { kPolicy = 0, kValue, kTermination, kEntropy, kHdReg, kNumTerms };

struct TermEvaluation {
  LossBreakdown values;
  // Per-term adjoints: hidden for states s_t (all terms but termination) and
  // arrival states s' (termination only).
  std::vector<OutputAdjoint> current;
  OutputAdjoint arrival;
};

inline TermEvaluation EvaluateTerms(const AgentParams& params, const Rollout& rollout,
                                    const LossConstants& constants, const TrainConfig& config,
                                    const ForwardCache& cache, const ForwardCache& next_cache,
                                    bool want_adjoints) {
  const auto& arch = params.arch;
  const std::size_t count = rollout.transitions.size();
  const double inv_t = 1.0 / static_cast<double>(count);
  const auto m = static_cast<Eigen::Index>(arch.num_options);
  const auto k = static_cast<Eigen::Index>(arch.action.size);
  const auto batch = static_cast<Eigen::Index>(count);

  TermEvaluation ev;
  if (want_adjoints) {
    ev.current.assign(kNumTerms, OutputAdjoint::ZerosFor(arch, batch));
    ev.arrival = OutputAdjoint::ZerosFor(arch, batch);
  }
  std::size_t arrivals = 0;
  for (const auto& tr : rollout.transitions) arrivals += tr.done ? 0 : 1;

  for (std::size_t i = 0; i < count; ++i) {
    const auto b = static_cast<Eigen::Index>(i);
    const Transition& tr = rollout.transitions[i];
    const auto w = static_cast<Eigen::Index>(tr.option);
    const double adv = constants.advantages[i];

    // Value.
    const double err = constants.targets[i] - cache.q(w, b);
    ev.values.value_loss += inv_t * err * err;
    if (want_adjoints) ev.current[kValue].q(w, b) = -2.0 * inv_t * err;

    if (arch.action.discrete()) {
      const Eigen::Index a = static_cast<Eigen::Index>(tr.action.index);
      const double p_a = cache.probs(w * k + a, b);
      ev.values.policy_loss -= inv_t * std::log(p_a) * adv;
      double h = 0.0;
      for (Eigen::Index x = 0; x < k; ++x) {
        const double p = cache.probs(w * k + x, b);
        if (p > 0.0) h -= p * std::log(p);
        if (want_adjoints) ev.current[kEntropy].probs(w * k + x, b) = -inv_t * (std::log(p) + 1.0);
      }
      ev.values.entropy += inv_t * h;
      if (want_adjoints) ev.current[kPolicy].probs(w * k + a, b) = -inv_t * adv / p_a;
    } else {
      double log_prob = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        const double mu = cache.mean(w * k + j, b);
        const double log_std = cache.log_std(w * k + j);
        const double var = std::exp(2.0 * log_std);
        const double diff = tr.action.values[static_cast<std::size_t>(j)] - mu;
        log_prob += -0.5 * diff * diff / var - log_std - 0.5 * std::log(2.0 * std::numbers::pi);
        ev.values.entropy += inv_t * (log_std + 0.5 * (1.0 + std::log(2.0 * std::numbers::pi)));
        if (want_adjoints) {
          ev.current[kPolicy].mean(w * k + j, b) = -inv_t * adv * diff / var;
          ev.current[kPolicy].log_std(w * k + j) += -inv_t * adv * (diff * diff / var - 1.0);
          ev.current[kEntropy].log_std(w * k + j) += inv_t;
        }
      }
      ev.values.policy_loss -= inv_t * log_prob * adv;
    }

    // Termination at the arrival state, with the deliberation cost.
    if (!tr.done) {
      const double weight = (constants.termination_advantages[i] + config.deliberation_cost) /
                            static_cast<double>(arrivals);
      ev.values.termination_loss += next_cache.beta(w, b) * weight;
      if (want_adjoints) ev.arrival.beta(w, b) = weight;
    }

    // Pairwise Hellinger distance between all options' policies at s_t.
    if (m >= 2) {
      if (arch.action.discrete()) {
        std::vector<Categorical> dists;
        for (Eigen::Index o = 0; o < m; ++o) {
          dists.push_back(PolicyCategorical(cache, arch, b, static_cast<std::size_t>(o)));
        }
        ev.values.hd_reg_value += inv_t * HdRegularizer(std::span<const Categorical>(dists));
        if (want_adjoints) {
          const auto grad = HdRegularizerGradient(std::span<const Categorical>(dists));
          for (Eigen::Index o = 0; o < m; ++o) {
            for (Eigen::Index x = 0; x < k; ++x) {
              ev.current[kHdReg].probs(o * k + x, b) = inv_t * grad[o][x];
            }
          }
        }
      } else {
        std::vector<DiagGaussian> dists;
        for (Eigen::Index o = 0; o < m; ++o) {
          dists.push_back(PolicyGaussian(cache, arch, b, static_cast<std::size_t>(o)));
        }
        ev.values.hd_reg_value += inv_t * HdRegularizer(std::span<const DiagGaussian>(dists));
        if (want_adjoints) {
          const auto grad = HdRegularizerGradient(std::span<const DiagGaussian>(dists));
          for (Eigen::Index o = 0; o < m; ++o) {
            for (Eigen::Index j = 0; j < k; ++j) {
              ev.current[kHdReg].mean(o * k + j, b) = inv_t * grad[o].d_mean[j];
              ev.current[kHdReg].log_std(o * k + j) += inv_t * grad[o].d_log_std[j];
            }
          }
        }
      }
    }
  }
  auto& v = ev.values;
  v.total = v.policy_loss + config.value_coef * v.value_loss + v.termination_loss -
            config.entropy_coef * v.entropy - config.hd_coef * v.hd_reg_value;
  return ev;
}

inline OutputAdjoint Combine(const std::vector<OutputAdjoint>& terms, const TrainConfig& config) {
  const double coef[kNumTerms] = {1.0, config.value_coef, 1.0, -config.entropy_coef, -config.hd_coef};
  OutputAdjoint out = terms[kPolicy];
  auto add = [](Eigen::MatrixXd& dst, const Eigen::MatrixXd& src, double c) {
    if (src.size() != 0) dst += c * src;
  };
  for (int t = 1; t < kNumTerms; ++t) {
    add(out.q, terms[t].q, coef[t]);
    add(out.beta, terms[t].beta, coef[t]);
    add(out.probs, terms[t].probs, coef[t]);
    add(out.mean, terms[t].mean, coef[t]);
    if (terms[t].log_std.size() != 0) out.log_std += coef[t] * terms[t].log_std;
  }
  return out;
}

}  // namespace detail

inline LossConstants ComputeLossConstants(const AgentParams& params, const Rollout& rollout,
                                          std::vector<double> targets) {
  Require(targets.size() == rollout.transitions.size(), ErrorCode::kShapeMismatch,
          "targets and rollout sizes differ");
  const ForwardCache cache = Forward(params, detail::StackObs(rollout, false));
  LossConstants c;
  c.advantages.resize(targets.size());
  c.termination_advantages.assign(targets.size(), 0.0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Transition& tr = rollout.transitions[i];
    c.advantages[i] = targets[i] - cache.q(static_cast<Eigen::Index>(tr.option), static_cast<Eigen::Index>(i));
    if (!tr.done) {
      const double v = *std::max_element(tr.q_next.begin(), tr.q_next.end());
      c.termination_advantages[i] = tr.q_next[tr.option] - v;
    }
  }
  c.targets = std::move(targets);
  return c;
}

// Loss terms only, holding the constants fixed. This is the function the
// gradient checks difference.
inline LossBreakdown EvaluateLoss(const AgentParams& params, const Rollout& rollout,
                                  const LossConstants& constants, const TrainConfig& config) {
  const ForwardCache cache = Forward(params, detail::StackObs(rollout, false));
  const ForwardCache next_cache = Forward(params, detail::StackObs(rollout, true));
  return detail::EvaluateTerms(params, rollout, constants, config, cache, next_cache, false).values;
}

struct LossResult {
  LossBreakdown breakdown;
  LossGradients gradients;
};

inline LossResult ComputeLosses(const AgentParams& params, const Rollout& rollout,
                                const LossConstants& constants, const TrainConfig& config,
                                bool per_term_gradients = false) {
  Require(!rollout.transitions.empty(), ErrorCode::kShapeMismatch, "empty rollout");
  Require(constants.targets.size() == rollout.transitions.size() &&
              constants.advantages.size() == rollout.transitions.size() &&
              constants.termination_advantages.size() == rollout.transitions.size(),
          ErrorCode::kShapeMismatch, "loss constants do not match the rollout");
  const ForwardCache cache = Forward(params, detail::StackObs(rollout, false));
  const ForwardCache next_cache = Forward(params, detail::StackObs(rollout, true));
  auto ev = detail::EvaluateTerms(params, rollout, constants, config, cache, next_cache, true);

  LossResult result;
  result.breakdown = ev.values;
  result.gradients.total =
      Backward(params, cache, detail::Combine(ev.current, config)) +
      Backward(params, next_cache, ev.arrival);
  if (per_term_gradients) {
    result.gradients.policy = Backward(params, cache, ev.current[detail::kPolicy]);
    result.gradients.value = Backward(params, cache, ev.current[detail::kValue]);
    result.gradients.termination = Backward(params, next_cache, ev.arrival);
    result.gradients.entropy = Backward(params, cache, ev.current[detail::kEntropy]);
    result.gradients.hd_reg = Backward(params, cache, ev.current[detail::kHdReg]);
  }
  return result;
}

inline LossResult ComputeLosses(const AgentParams& params, const Rollout& rollout,
                                const std::vector<double>& targets, const TrainConfig& config,
                                bool per_term_gradients = false) {
  return ComputeLosses(params, rollout, ComputeLossConstants(params, rollout, targets), config,
                       per_term_gradients);
}

}  // namespace optsep
