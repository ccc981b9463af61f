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

#include <cmath>

#include "optsep/error.hpp"

namespace optsep {

struct RmsPropState {
  Eigen::VectorXd square_avg;
};

// v <- a v + (1 - a) g^2 ;  theta <- theta - lr g / (sqrt(v) + eps)
inline void RmsPropStep(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr,
                        double smoothing, RmsPropState& state, double eps = 1e-5) {
  Require(params.size() == grads.size(), ErrorCode::kShapeMismatch,
          "rmsprop: parameter and gradient sizes differ");
  if (state.square_avg.size() == 0) state.square_avg = Eigen::VectorXd::Zero(params.size());
  Require(state.square_avg.size() == params.size(), ErrorCode::kShapeMismatch,
          "rmsprop: optimizer state size differs from parameters");
  state.square_avg = smoothing * state.square_avg + (1.0 - smoothing) * grads.cwiseAbs2();
  params.array() -= lr * grads.array() / (state.square_avg.array().sqrt() + eps);
}

}  // namespace optsep
