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

// Desk-scale episodic environments.
//
// FourRooms is the 13x13 four-rooms gridworld with one doorway per inner
// wall. PointMass is a planar point driven by a clipped velocity command
// whose reward splits into a forwarding and a control component.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "optsep/error.hpp"
#include "optsep/network.hpp"
#include "optsep/rng.hpp"

namespace optsep {

struct EnvSpec {
  std::size_t observation_dim = 1;
  ActionSpec action;
  std::size_t max_episode_steps = 1;
  std::vector<std::string> intrinsic_reward_names;
};

struct StepResult {
  std::vector<double> obs;
  double reward = 0.0;
  std::map<std::string, double> intrinsic;
  bool done = false;       // reached a terminal state
  bool truncated = false;  // hit the step limit in a non-terminal state
};

// Action for either action space; discrete environments read `index`,
// continuous ones read `values`.
struct Action {
  std::size_t index = 0;
  std::vector<double> values;

  static Action Discrete(std::size_t i) { return {i, {}}; }
  static Action Continuous(std::vector<double> v) { return {0, std::move(v)}; }
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> Reset(std::uint64_t seed) = 0;
  virtual StepResult Step(const Action& action) = 0;
  virtual std::unique_ptr<Environment> Clone() const = 0;
  virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------

struct FourRoomsOptions {
  std::size_t max_episode_steps = 500;
  double slip_probability = 1.0 / 3.0;
};

class FourRooms final : public Environment {
 public:
  enum Move : std::size_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

  static constexpr int kSize = 13;

  explicit FourRooms(FourRoomsOptions options = {}) : options_(options) {
    Require(options_.max_episode_steps >= 1, ErrorCode::kInvalidArgument,
            "max_episode_steps must be >= 1");
    Require(options_.slip_probability >= 0.0 && options_.slip_probability <= 1.0,
            ErrorCode::kInvalidArgument, "slip_probability must be in [0, 1]");
    cell_index_.fill(-1);
    int next = 0;
    for (int r = 0; r < kSize; ++r) {
      for (int c = 0; c < kSize; ++c) {
        if (Layout()[r][c] != 'w') cell_index_[r * kSize + c] = next++;
      }
    }
    num_cells_ = static_cast<std::size_t>(next);
    spec_ = {num_cells_, ActionSpec::Discrete(4), options_.max_episode_steps, {}};
  }

  static const std::array<const char*, kSize>& Layout() {
    static const std::array<const char*, kSize> layout = {
        "wwwwwwwwwwwww",
        "w     w     w",
        "w     w     w",
        "w           w",
        "w     w     w",
        "w     w     w",
        "ww wwww     w",
        "w     www www",
        "w     w     w",
        "w     w     w",
        "w           w",
        "w     w    Gw",
        "wwwwwwwwwwwww",
    };
    return layout;
  }

  static constexpr std::pair<int, int> kStart = {1, 1};
  static constexpr std::pair<int, int> kGoal = {11, 11};

  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "fourrooms"; }

  std::vector<double> Reset(std::uint64_t seed) override {
    rng_ = Rng(seed);
    pos_ = kStart;
    steps_ = 0;
    finished_ = false;
    last_slipped_ = false;
    return Observation();
  }

  StepResult Step(const Action& action) override {
    Require(!finished_, ErrorCode::kEpisodeFinished, "step after episode end; call Reset");
    Require(action.index < 4, ErrorCode::kInvalidAction,
            "four-rooms action must be in [0, 4), got " + std::to_string(action.index));
    std::size_t move = action.index;
    last_slipped_ = rng_.Bernoulli(options_.slip_probability);
    if (last_slipped_) {
      // uniformly one of the three other directions
      const std::size_t other = rng_.Index(3);
      move = other >= move ? other + 1 : other;
    }
    static constexpr int dr[4] = {-1, 1, 0, 0};
    static constexpr int dc[4] = {0, 0, -1, 1};
    const std::pair<int, int> next = {pos_.first + dr[move], pos_.second + dc[move]};
    if (IsFree(next.first, next.second)) pos_ = next;
    ++steps_;

    StepResult result;
    result.done = pos_ == kGoal;
    result.reward = result.done ? 1.0 : 0.0;
    result.truncated = !result.done && steps_ >= options_.max_episode_steps;
    finished_ = result.done || result.truncated;
    result.obs = Observation();
    return result;
  }

  std::unique_ptr<Environment> Clone() const override { return std::make_unique<FourRooms>(*this); }

  static bool IsFree(int r, int c) {
    return r >= 0 && c >= 0 && r < kSize && c < kSize && Layout()[r][c] != 'w';
  }

  std::pair<int, int> position() const { return pos_; }
  // Test hook: place the agent on a free cell.
  void set_position(std::pair<int, int> cell) {
    Require(IsFree(cell.first, cell.second), ErrorCode::kInvalidArgument, "cell is a wall");
    pos_ = cell;
  }
  bool last_step_slipped() const { return last_slipped_; }
  std::size_t num_cells() const { return num_cells_; }
  int CellIndex(int r, int c) const { return cell_index_[r * kSize + c]; }

 private:
  std::vector<double> Observation() const {
    std::vector<double> obs(num_cells_, 0.0);
    obs[static_cast<std::size_t>(CellIndex(pos_.first, pos_.second))] = 1.0;
    return obs;
  }

  FourRoomsOptions options_;
  EnvSpec spec_;
  std::array<int, kSize * kSize> cell_index_{};
  std::size_t num_cells_ = 0;
  Rng rng_;
  std::pair<int, int> pos_ = kStart;
  std::size_t steps_ = 0;
  bool finished_ = false;
  bool last_slipped_ = false;
};

// ---------------------------------------------------------------------------

struct PointMassOptions {
  std::size_t max_episode_steps = 200;
  double dt = 0.05;
  double control_cost = 0.1;
};

// x <- x + dt * clip(a, -1, 1). Forwarding reward is the x-displacement
// divided by dt; control reward is -control_cost * |a|^2 on the clipped
// action. Observations are the position divided by the largest reachable
// excursion (dt * max_episode_steps), so they lie in [-1, 1].
class PointMass final : public Environment {
 public:
  static constexpr const char* kForwarding = "forwarding";
  static constexpr const char* kControl = "control";

  explicit PointMass(PointMassOptions options = {}) : options_(options) {
    Require(options_.max_episode_steps >= 1, ErrorCode::kInvalidArgument,
            "max_episode_steps must be >= 1");
    Require(options_.dt > 0.0, ErrorCode::kInvalidArgument, "dt must be positive");
    spec_ = {2, ActionSpec::Continuous(2), options_.max_episode_steps, {kControl, kForwarding}};
  }

  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "pointmass"; }

  std::vector<double> Reset(std::uint64_t /*seed*/) override {
    pos_ = {0.0, 0.0};
    steps_ = 0;
    finished_ = false;
    return Observation();
  }

  StepResult Step(const Action& action) override {
    Require(!finished_, ErrorCode::kEpisodeFinished, "step after episode end; call Reset");
    Require(action.values.size() == 2, ErrorCode::kInvalidAction,
            "point-mass action must have 2 components");
    std::array<double, 2> a{};
    for (std::size_t j = 0; j < 2; ++j) {
      Require(std::isfinite(action.values[j]), ErrorCode::kInvalidAction, "non-finite action");
      a[j] = std::clamp(action.values[j], -1.0, 1.0);
    }
    const double x_before = pos_[0];
    for (std::size_t j = 0; j < 2; ++j) pos_[j] += options_.dt * a[j];
    ++steps_;

    StepResult result;
    const double forwarding = (pos_[0] - x_before) / options_.dt;
    const double control = -options_.control_cost * (a[0] * a[0] + a[1] * a[1]);
    result.intrinsic = {{kControl, control}, {kForwarding, forwarding}};
    result.reward = forwarding + control;
    result.truncated = steps_ >= options_.max_episode_steps;
    finished_ = result.truncated;
    result.obs = Observation();
    return result;
  }

  std::unique_ptr<Environment> Clone() const override { return std::make_unique<PointMass>(*this); }

  std::array<double, 2> position() const { return pos_; }

 private:
  std::vector<double> Observation() const {
    const double scale = 1.0 / (options_.dt * static_cast<double>(options_.max_episode_steps));
    return {pos_[0] * scale, pos_[1] * scale};
  }

  PointMassOptions options_;
  EnvSpec spec_;
  std::array<double, 2> pos_{0.0, 0.0};
  std::size_t steps_ = 0;
  bool finished_ = false;
};

// sum_t gamma^t r_t, t from 0.
inline double DiscountedReturn(std::span<const double> rewards, double gamma) {
  Require(gamma >= 0.0 && gamma < 1.0, ErrorCode::kInvalidArgument, "gamma must be in [0, 1)");
  double total = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

}  // namespace optsep
