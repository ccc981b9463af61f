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

// Run configuration: a flat JSON object. Defaults depend on the environment
// (discrete or continuous hyperparameter set); a resolved configuration has
// every key materialized and is enough to reproduce a run.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "optsep/envs.hpp"
#include "optsep/error.hpp"
#include "optsep/optioncritic.hpp"

namespace optsep {

enum class ValueType { kNumber, kUnsigned, kBool, kString, kUnsignedArray };

struct ConfigKey {
  const char* name;
  ValueType type;
};

inline const std::vector<ConfigKey>& ConfigSchema() {
  static const std::vector<ConfigKey> schema = {
      {"env", ValueType::kString},
      {"max_episode_steps", ValueType::kUnsigned},
      {"slip_probability", ValueType::kNumber},
      {"dt", ValueType::kNumber},
      {"control_cost", ValueType::kNumber},
      {"gamma", ValueType::kNumber},
      {"num_options", ValueType::kUnsigned},
      {"epsilon", ValueType::kNumber},
      {"workers", ValueType::kUnsigned},
      {"n_steps", ValueType::kUnsigned},
      {"total_steps", ValueType::kUnsigned},
      {"lr", ValueType::kNumber},
      {"rmsprop_smoothing", ValueType::kNumber},
      {"rmsprop_epsilon", ValueType::kNumber},
      {"value_coef", ValueType::kNumber},
      {"entropy_coef", ValueType::kNumber},
      {"deliberation_cost", ValueType::kNumber},
      {"hd_coef", ValueType::kNumber},
      {"p_min", ValueType::kNumber},
      {"reward_clip", ValueType::kBool},
      {"seed", ValueType::kUnsigned},
      {"hidden", ValueType::kUnsignedArray},
      {"activation", ValueType::kString},
      {"single_threaded", ValueType::kBool},
      {"checkpoint_every", ValueType::kUnsigned},
      {"eval_episodes", ValueType::kUnsigned},
      {"histogram_bins", ValueType::kUnsigned},
      {"curve_window", ValueType::kUnsigned},
      {"out", ValueType::kString},
  };
  return schema;
}

// Discrete-action defaults follow the Atari-scale hyperparameter table,
// continuous ones the MuJoCo-scale table; the remaining knobs are shared.
inline nlohmann::json DefaultConfig(const std::string& env) {
  Require(env == "fourrooms" || env == "pointmass", ErrorCode::kConfigParseError,
          "key 'env': unknown environment '" + env + "' (expected fourrooms or pointmass)");
  const bool discrete = env == "fourrooms";
  return {
      {"env", env},
      {"max_episode_steps", discrete ? 500 : 200},
      {"slip_probability", 1.0 / 3.0},
      {"dt", 0.05},
      {"control_cost", 0.1},
      {"gamma", 0.99},
      {"num_options", 4},
      {"epsilon", 0.01},
      {"workers", 16},
      {"n_steps", 5},
      {"total_steps", 200000},
      {"lr", discrete ? 0.0007 : 0.0003},
      {"rmsprop_smoothing", 0.99},
      {"rmsprop_epsilon", 1e-5},
      {"value_coef", 0.5},
      {"entropy_coef", discrete ? 0.01 : 0.0001},
      {"deliberation_cost", 0.01},
      {"hd_coef", 0.007},
      {"p_min", 1e-4},
      {"reward_clip", false},
      {"seed", 0},
      {"hidden", {64, 64}},
      {"activation", "tanh"},
      {"single_threaded", false},
      {"checkpoint_every", 0},
      {"eval_episodes", 20},
      {"histogram_bins", 20},
      {"curve_window", 200},
      {"out", "runs/" + env},
  };
}

namespace detail {

inline bool Matches(const nlohmann::json& v, ValueType type) {
  switch (type) {
    case ValueType::kNumber: return v.is_number();
    case ValueType::kUnsigned: return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    case ValueType::kBool: return v.is_boolean();
    case ValueType::kString: return v.is_string();
    case ValueType::kUnsignedArray:
      if (!v.is_array() || v.empty()) return false;
      for (const auto& e : v) {
        if (!Matches(e, ValueType::kUnsigned)) return false;
      }
      return true;
  }
  return false;
}

inline const char* TypeName(ValueType type) {
  switch (type) {
    case ValueType::kNumber: return "a number";
    case ValueType::kUnsigned: return "a non-negative integer";
    case ValueType::kBool: return "a boolean";
    case ValueType::kString: return "a string";
    case ValueType::kUnsignedArray: return "a non-empty array of non-negative integers";
  }
  return "?";
}

inline void CheckEntry(const std::string& key, const nlohmann::json& value, const std::string& where) {
  for (const auto& k : ConfigSchema()) {
    if (key == k.name) {
      Require(Matches(value, k.type), ErrorCode::kConfigParseError,
              where + "key '" + key + "' must be " + TypeName(k.type) + ", got " + value.dump());
      return;
    }
  }
  Fail(ErrorCode::kConfigParseError, where + "unknown key '" + key + "'");
}

inline std::size_t LineOf(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) line += text[i] == '\n';
  return line;
}

}  // namespace detail

inline nlohmann::json ParseConfigText(const std::string& text, const std::string& source = "config") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    Fail(ErrorCode::kConfigParseError, source + ":" + std::to_string(detail::LineOf(text, e.byte)) +
                                           ": " + e.what());
  }
  Require(j.is_object(), ErrorCode::kConfigParseError, source + ": top level must be an object");
  for (const auto& [key, value] : j.items()) detail::CheckEntry(key, value, source + ": ");
  return j;
}

inline nlohmann::json ReadConfigFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  Require(static_cast<bool>(in), ErrorCode::kMissingInput, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseConfigText(buf.str(), path.string());
}

// Parses one "key=value" override. The value is read as JSON when it parses
// as JSON, otherwise as a bare string.
inline std::pair<std::string, nlohmann::json> ParseOverride(const std::string& text) {
  const auto eq = text.find('=');
  Require(eq != std::string::npos && eq > 0, ErrorCode::kConfigParseError,
          "override '" + text + "' is not key=value");
  std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  detail::CheckEntry(key, value, "--set: ");
  return {std::move(key), std::move(value)};
}

// File values over environment defaults, then overrides in order.
inline nlohmann::json ResolveConfig(const nlohmann::json& file,
                                    const std::vector<std::pair<std::string, nlohmann::json>>& overrides = {}) {
  Require(file.is_null() || file.is_object(), ErrorCode::kConfigParseError, "config must be an object");
  std::string env = file.is_object() ? file.value("env", std::string("fourrooms")) : "fourrooms";
  for (const auto& [k, v] : overrides) {
    if (k == "env") env = v.get<std::string>();
  }
  nlohmann::json resolved = DefaultConfig(env);
  for (const auto& [k, v] : file.items()) resolved[k] = v;
  for (const auto& [k, v] : overrides) resolved[k] = v;
  const auto act = resolved.at("activation").get<std::string>();
  Require(act == "tanh" || act == "relu", ErrorCode::kConfigParseError,
          "key 'activation': expected tanh or relu, got '" + act + "'");
  return resolved;
}

inline TrainConfig ToTrainConfig(const nlohmann::json& r) {
  TrainConfig c;
  c.gamma = r.at("gamma").get<double>();
  c.num_options = r.at("num_options").get<std::size_t>();
  c.epsilon = r.at("epsilon").get<double>();
  c.workers = r.at("workers").get<std::size_t>();
  c.n_steps = r.at("n_steps").get<std::size_t>();
  c.total_steps = r.at("total_steps").get<std::size_t>();
  c.lr = r.at("lr").get<double>();
  c.rmsprop_smoothing = r.at("rmsprop_smoothing").get<double>();
  c.rmsprop_epsilon = r.at("rmsprop_epsilon").get<double>();
  c.value_coef = r.at("value_coef").get<double>();
  c.entropy_coef = r.at("entropy_coef").get<double>();
  c.deliberation_cost = r.at("deliberation_cost").get<double>();
  c.hd_coef = r.at("hd_coef").get<double>();
  c.p_min = r.at("p_min").get<double>();
  c.reward_clip = r.at("reward_clip").get<bool>();
  c.seed = r.at("seed").get<std::uint64_t>();
  c.hidden = r.at("hidden").get<std::vector<std::size_t>>();
  c.activation = r.at("activation").get<std::string>() == "relu" ? Activation::kRelu : Activation::kTanh;
  c.single_threaded = r.at("single_threaded").get<bool>();
  try {
    c.Validate();
  } catch (const Error& e) {
    Fail(ErrorCode::kConfigParseError, e.what());
  }
  return c;
}

inline std::unique_ptr<Environment> MakeEnvironment(const nlohmann::json& r) {
  const auto env = r.at("env").get<std::string>();
  if (env == "fourrooms") {
    return std::make_unique<FourRooms>(FourRoomsOptions{r.at("max_episode_steps").get<std::size_t>(),
                                                        r.at("slip_probability").get<double>()});
  }
  if (env == "pointmass") {
    return std::make_unique<PointMass>(PointMassOptions{r.at("max_episode_steps").get<std::size_t>(),
                                                        r.at("dt").get<double>(),
                                                        r.at("control_cost").get<double>()});
  }
  Fail(ErrorCode::kConfigParseError, "key 'env': unknown environment '" + env + "'");
}

// The part of a resolved config that determines the results (everything but
// the output location).
inline nlohmann::json ReproducibleConfig(nlohmann::json resolved) {
  resolved.erase("out");
  return resolved;
}

}  // namespace optsep
