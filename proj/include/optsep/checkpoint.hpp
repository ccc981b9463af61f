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

// Checkpoint file: one line of JSON header, then the parameter vector as
// little-endian IEEE-754 doubles. The header records the format version,
// the architecture, seed, step count, parameter count and a CRC-32 of the
// payload bytes.

#pragma once

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "optsep/error.hpp"
#include "optsep/network.hpp"

namespace optsep {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointMagic = "optsep-checkpoint";

inline nlohmann::json ArchitectureToJson(const Architecture& arch) {
  return {
      {"input_dim", arch.input_dim},
      {"hidden", arch.hidden},
      {"activation", ActivationName(arch.activation)},
      {"num_options", arch.num_options},
      {"action", {{"kind", arch.action.discrete() ? "discrete" : "continuous"},
                  {"size", arch.action.size}}},
      {"policy_floor", arch.policy_floor},
  };
}

inline Architecture ArchitectureFromJson(const nlohmann::json& j) {
  try {
    Architecture arch;
    arch.input_dim = j.at("input_dim").get<std::size_t>();
    arch.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    const auto act = j.at("activation").get<std::string>();
    Require(act == "tanh" || act == "relu", ErrorCode::kFormatVersionMismatch,
            "unknown activation " + act);
    arch.activation = act == "tanh" ? Activation::kTanh : Activation::kRelu;
    arch.num_options = j.at("num_options").get<std::size_t>();
    const auto kind = j.at("action").at("kind").get<std::string>();
    const auto size = j.at("action").at("size").get<std::size_t>();
    Require(kind == "discrete" || kind == "continuous", ErrorCode::kFormatVersionMismatch,
            "unknown action kind " + kind);
    arch.action = kind == "discrete" ? ActionSpec::Discrete(size) : ActionSpec::Continuous(size);
    arch.policy_floor = j.at("policy_floor").get<double>();
    arch.Validate();
    return arch;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormatVersionMismatch, std::string("malformed architecture: ") + e.what());
  }
}

struct CheckpointMetadata {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
  AgentParams params;
  CheckpointMetadata metadata;
};

namespace detail {

inline std::string PayloadBytes(const Eigen::VectorXd& values) {
  std::string bytes(static_cast<std::size_t>(values.size()) * sizeof(double), '\0');
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values(i));
    for (int b = 0; b < 8; ++b) {
      bytes[static_cast<std::size_t>(i) * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  return bytes;
}

inline std::string Crc32Hex(const std::string& bytes) {
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
                         static_cast<uInt>(bytes.size()));
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

}  // namespace detail

inline void SaveCheckpoint(const std::filesystem::path& path, const AgentParams& params,
                           const CheckpointMetadata& metadata) {
  const std::string payload = detail::PayloadBytes(params.values);
  nlohmann::json header = {
      {"format", kCheckpointMagic},
      {"format_version", kCheckpointFormatVersion},
      {"architecture", ArchitectureToJson(params.arch)},
      {"seed", metadata.seed},
      {"step", metadata.step},
      {"num_params", params.values.size()},
      {"checksum", detail::Crc32Hex(payload)},
      {"metadata", metadata.extra},
  };
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(static_cast<bool>(out), ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  Require(static_cast<bool>(out), ErrorCode::kIoError, "write failed for " + path.string());
}

inline Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open " + path.string());
  std::string header_line;
  Require(static_cast<bool>(std::getline(in, header_line)), ErrorCode::kChecksumMismatch,
          "checkpoint has no header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormatVersionMismatch, std::string("unparseable checkpoint header: ") + e.what());
  }
  Require(header.value("format", std::string()) == kCheckpointMagic, ErrorCode::kFormatVersionMismatch,
          "not an optsep checkpoint");
  Require(header.value("format_version", -1) == kCheckpointFormatVersion,
          ErrorCode::kFormatVersionMismatch,
          "checkpoint format version " + header.value("format_version", nlohmann::json()).dump() +
              " != " + std::to_string(kCheckpointFormatVersion));

  Checkpoint ckpt;
  const Architecture arch = ArchitectureFromJson(header.at("architecture"));
  ckpt.params = AgentParams{arch, ParamLayout(arch), {}};
  const auto num_params = header.at("num_params").get<std::size_t>();
  Require(num_params == ckpt.params.layout.total(), ErrorCode::kFormatVersionMismatch,
          "parameter count " + std::to_string(num_params) + " does not match architecture (" +
              std::to_string(ckpt.params.layout.total()) + ")");

  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Require(payload.size() == num_params * sizeof(double), ErrorCode::kChecksumMismatch,
          "payload is " + std::to_string(payload.size()) + " bytes, expected " +
              std::to_string(num_params * sizeof(double)));
  Require(detail::Crc32Hex(payload) == header.at("checksum").get<std::string>(),
          ErrorCode::kChecksumMismatch, "payload checksum mismatch");

  ckpt.params.values.resize(static_cast<Eigen::Index>(num_params));
  for (std::size_t i = 0; i < num_params; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[i * 8 + b])) << (8 * b);
    }
    ckpt.params.values(static_cast<Eigen::Index>(i)) = std::bit_cast<double>(bits);
  }
  ckpt.metadata.seed = header.at("seed").get<std::uint64_t>();
  ckpt.metadata.step = header.at("step").get<std::uint64_t>();
  ckpt.metadata.extra = header.value("metadata", nlohmann::json::object());
  return ckpt;
}

// Loads and rejects a checkpoint whose architecture differs from `expected`.
inline Checkpoint LoadCheckpoint(const std::filesystem::path& path, const Architecture& expected) {
  Checkpoint ckpt = LoadCheckpoint(path);
  Require(ckpt.params.arch == expected, ErrorCode::kFormatVersionMismatch,
          "checkpoint architecture " + ArchitectureToJson(ckpt.params.arch).dump() +
              " does not match expected " + ArchitectureToJson(expected).dump());
  return ckpt;
}

}  // namespace optsep
