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

#include <stdexcept>
#include <string>
#include <string_view>

namespace optsep {

enum class ErrorCode {
  kDimensionMismatch,
  kDivergenceUndefined,
  kTooFewOptions,
  kMixedFamilies,
  kInfeasibleClamp,
  kUnsupportedPrimitive,
  kShapeMismatch,
  kIoError,
  kFormatVersionMismatch,
  kChecksumMismatch,
  kInvalidAction,
  kEpisodeFinished,
  kNumericalFailure,
  kEmptyLog,
  kEmptySample,
  kNoIntrinsics,
  kConfigParseError,
  kMissingInput,
  kInvalidArgument,
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDivergenceUndefined: return "DivergenceUndefined";
    case ErrorCode::kTooFewOptions: return "TooFewOptions";
    case ErrorCode::kMixedFamilies: return "MixedFamilies";
    case ErrorCode::kInfeasibleClamp: return "InfeasibleClamp";
    case ErrorCode::kUnsupportedPrimitive: return "UnsupportedPrimitive";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kFormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kInvalidAction: return "InvalidAction";
    case ErrorCode::kEpisodeFinished: return "EpisodeFinished";
    case ErrorCode::kNumericalFailure: return "NumericalFailure";
    case ErrorCode::kEmptyLog: return "EmptyLog";
    case ErrorCode::kEmptySample: return "EmptySample";
    case ErrorCode::kNoIntrinsics: return "NoIntrinsics";
    case ErrorCode::kConfigParseError: return "ConfigParseError";
    case ErrorCode::kMissingInput: return "MissingInput";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

// Every failure raised by the library carries one of the codes above; the
// message is for humans, the code is for callers.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void Require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) Fail(code, message);
}

}  // namespace optsep
