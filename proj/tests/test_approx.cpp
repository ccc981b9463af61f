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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "optsep/checkpoint.hpp"
#include "optsep/network.hpp"
#include "optsep/rmsprop.hpp"
#include "oracles.hpp"

namespace optsep {
namespace {

Architecture DiscreteArch(Activation act = Activation::kTanh) {
  Architecture arch;
  arch.input_dim = 6;
  arch.hidden = {8, 7};
  arch.activation = act;
  arch.num_options = 3;
  arch.action = ActionSpec::Discrete(4);
  return arch;
}

Architecture GaussianArch() {
  Architecture arch = DiscreteArch();
  arch.action = ActionSpec::Continuous(2);
  return arch;
}

Eigen::MatrixXd RandomObs(std::size_t dim, Eigen::Index batch, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd obs(static_cast<Eigen::Index>(dim), batch);
  for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = n01(gen);
  return obs;
}

std::filesystem::path TempPath(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("optsep_test_" + name);
}

// A loss with random weights on every output, with log on the policy
// probabilities so the floor and softmax are both exercised.
OutputLoss RandomLoss(const Architecture& arch, Eigen::Index batch, std::uint64_t seed) {
  const auto m = static_cast<Eigen::Index>(arch.num_options);
  const auto rows = static_cast<Eigen::Index>(arch.num_options * arch.action.size);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  auto random = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd w(r, c);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n01(gen);
    return w;
  };
  const Eigen::MatrixXd wq = random(m, batch), wb = random(m, batch), wp = random(rows, batch);
  const Eigen::VectorXd ws = random(rows, 1);
  const bool discrete = arch.action.discrete();
  return [=](const ForwardCache& cache) {
    OutputAdjoint adj = OutputAdjoint::ZerosFor(arch, batch);
    double value = (wq.array() * cache.q.array()).sum() + (wb.array() * cache.beta.array()).sum();
    adj.q = wq;
    adj.beta = wb;
    if (discrete) {
      value += (wp.array() * cache.probs.array().log()).sum();
      adj.probs = (wp.array() / cache.probs.array()).matrix();
    } else {
      value += (wp.array() * cache.mean.array().square()).sum() + ws.dot(cache.log_std);
      adj.mean = (2.0 * wp.array() * cache.mean.array()).matrix();
      adj.log_std = ws;
    }
    return std::make_pair(value, adj);
  };
}

double MaxGradientError(const AgentParams& params, const Eigen::MatrixXd& obs, const OutputLoss& loss) {
  const auto analytic = GradOfScalar(params, obs, loss).gradient;
  AgentParams probe = params;
  const auto numeric = testing::CentralDifference(
      [&](const Eigen::VectorXd& v) {
        probe.values = v;
        return loss(Forward(probe, obs)).first;
      },
      params.values);
  return testing::MaxRelativeError(analytic, numeric);
}

TEST(InitTest, DeterministicPerSeed) {
  const auto a = InitParams(DiscreteArch(), 7);
  const auto b = InitParams(DiscreteArch(), 7);
  const auto c = InitParams(DiscreteArch(), 8);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
  EXPECT_TRUE(a.AllFinite());
}

TEST(InitTest, ZeroBiasesAndSmallPolicyWeights) {
  const auto params = InitParams(GaussianArch(), 3);
  for (const auto& s : params.layout.slices()) {
    if (s.cols == 1) EXPECT_EQ(params.Matrix(s.name).norm(), 0.0) << s.name;
  }
  const double bound = 0.1 * std::sqrt(6.0 / (6.0 + 7.0));
  EXPECT_LE(params.Matrix("policy.mean.weight").cwiseAbs().maxCoeff(), bound);
  // Option heads get distinct draws.
  const auto q = params.Matrix("q.weight");
  EXPECT_NE(q.row(0), q.row(1));
}

TEST(ForwardTest, ZeroInputGivesNeutralHeads) {
  const auto params = InitParams(DiscreteArch(), 1);
  const auto out = Evaluate(params, std::vector<double>(6, 0.0));
  for (double b : out.beta) EXPECT_EQ(b, 0.5);
  for (double q : out.q_omega) EXPECT_EQ(q, 0.0);
  for (const auto& p : out.policies) {
    for (double v : std::get<Categorical>(p).probs()) EXPECT_DOUBLE_EQ(v, 0.25);
  }
  EXPECT_EQ(out.latent.size(), 7u);
}

TEST(ForwardTest, PolicyRowsSumToOneAndBetaInUnitInterval) {
  auto params = InitParams(DiscreteArch(), 2);
  params.values *= 30.0;  // saturate so the floor engages
  const auto cache = Forward(params, RandomObs(6, 40, 9));
  for (Eigen::Index b = 0; b < 40; ++b) {
    for (std::size_t w = 0; w < 3; ++w) {
      const auto block = cache.probs.col(b).segment(static_cast<Eigen::Index>(w) * 4, 4);
      EXPECT_NEAR(block.sum(), 1.0, 1e-12);
      EXPECT_GE(block.minCoeff(), kDefaultPolicyFloor * (1 - 1e-12));
    }
  }
  EXPECT_GE(cache.beta.minCoeff(), 0.0);
  EXPECT_LE(cache.beta.maxCoeff(), 1.0);
}

TEST(ForwardTest, HeadsShareTheTorso) {
  const auto base = InitParams(DiscreteArch(), 4);
  const auto obs = RandomObs(6, 5, 2);
  const auto ref = Forward(base, obs);

  auto head_only = base;
  head_only.Matrix("q.weight")(0, 0) += 0.5;
  const auto a = Forward(head_only, obs);
  EXPECT_EQ(a.probs, ref.probs);
  EXPECT_EQ(a.beta, ref.beta);
  EXPECT_NE(a.q.row(0), ref.q.row(0));
  EXPECT_EQ(a.q.row(1), ref.q.row(1));

  auto torso = base;
  torso.Matrix("torso.1.weight")(0, 0) += 0.5;
  const auto c = Forward(torso, obs);
  for (Eigen::Index w = 0; w < 3; ++w) {
    EXPECT_NE(c.q.row(w), ref.q.row(w));
    EXPECT_NE(c.beta.row(w), ref.beta.row(w));
  }
  EXPECT_NE(c.probs, ref.probs);
}

TEST(ForwardTest, RejectsWrongObservationSize) {
  const auto params = InitParams(DiscreteArch(), 1);
  EXPECT_THROW(Forward(params, RandomObs(5, 1, 1)), Error);
}

TEST(ForwardTest, GaussianLogStdIsClamped) {
  auto params = InitParams(GaussianArch(), 1);
  params.Matrix("policy.log_std")(0, 0) = 9.0;
  params.Matrix("policy.log_std")(1, 0) = -40.0;
  const auto cache = Forward(params, RandomObs(6, 1, 1));
  EXPECT_EQ(cache.log_std(0), 5.0);
  EXPECT_EQ(cache.log_std(1), -20.0);
}

TEST(ClampTest, Examples) {
  const auto out = ClampPolicy(Categorical({1.0, 0.0}), 1e-4);
  EXPECT_NEAR(out[0], 0.9999, 1e-15);
  EXPECT_EQ(out[1], 1e-4);
  const auto same = ClampPolicy(Categorical({0.25, 0.25, 0.5}), 1e-4);
  EXPECT_EQ(same[0], 0.25);
  EXPECT_EQ(same[2], 0.5);
  try {
    ClampPolicy(Categorical({0.5, 0.5}), 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasibleClamp);
  }
}

TEST(ClampTest, FloorHoldsOnRandomInputs) {
  std::mt19937_64 gen(31);
  std::exponential_distribution<double> ex(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 2 + trial % 9;
    const double p_min = 0.9 / static_cast<double>(k) * unit(gen);
    std::vector<double> p(k);
    double total = 0.0;
    for (auto& v : p) total += (v = std::pow(ex(gen), 8.0));
    for (auto& v : p) v /= total;
    const auto f = FloorProbabilities(p, p_min);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_GE(f.probs[i], p_min * (1 - 1e-12));
      sum += f.probs[i];
      // Order is preserved.
      for (std::size_t j = 0; j < k; ++j) {
        if (p[i] < p[j]) EXPECT_LE(f.probs[i], f.probs[j] * (1 + 1e-12));
      }
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(GradientTest, DiscreteTanhMatchesFiniteDifferences) {
  const auto arch = DiscreteArch();
  const auto obs = RandomObs(6, 3, 5);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto params = InitParams(arch, seed);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n01;
    for (Eigen::Index i = 0; i < params.values.size(); ++i) params.values(i) += 0.3 * n01(gen);
    EXPECT_LE(MaxGradientError(params, obs, RandomLoss(arch, 3, seed)), 1e-4);
  }
}

TEST(GradientTest, DiscreteWithActiveFloorMatchesFiniteDifferences) {
  auto arch = DiscreteArch();
  arch.policy_floor = 0.05;
  auto params = InitParams(arch, 11);
  params.Matrix("policy.weight") *= 200.0;
  const auto obs = RandomObs(6, 3, 6);
  const auto cache = Forward(params, obs);
  bool any_pinned = false;
  for (const auto& f : cache.floors) {
    for (bool b : f.pinned) any_pinned = any_pinned || b;
  }
  ASSERT_TRUE(any_pinned);
  EXPECT_LE(MaxGradientError(params, obs, RandomLoss(arch, 3, 4)), 1e-4);
}

TEST(GradientTest, DiscreteReluMatchesFiniteDifferences) {
  const auto arch = DiscreteArch(Activation::kRelu);
  auto params = InitParams(arch, 21);
  const auto obs = RandomObs(6, 3, 7);
  EXPECT_LE(MaxGradientError(params, obs, RandomLoss(arch, 3, 8)), 1e-4);
}

TEST(GradientTest, GaussianMatchesFiniteDifferences) {
  const auto arch = GaussianArch();
  auto params = InitParams(arch, 5);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n01;
  for (Eigen::Index i = 0; i < params.values.size(); ++i) params.values(i) += 0.3 * n01(gen);
  const auto obs = RandomObs(6, 4, 8);
  EXPECT_LE(MaxGradientError(params, obs, RandomLoss(arch, 4, 9)), 1e-4);
}

TEST(GradientTest, MismatchedAdjointIsRejected) {
  const auto params = InitParams(DiscreteArch(), 1);
  const auto obs = RandomObs(6, 2, 1);
  const auto cache = Forward(params, obs);
  auto adj = OutputAdjoint::ZerosFor(GaussianArch(), 2);
  try {
    Backward(params, cache, adj);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedPrimitive);
  }
  auto wrong = OutputAdjoint::ZerosFor(DiscreteArch(), 3);
  try {
    Backward(params, cache, wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  auto params = InitParams(GaussianArch(), 12);
  params.values(0) = -0.0;
  params.values(1) = 1e-310;
  const auto path = TempPath("roundtrip.ckpt");
  SaveCheckpoint(path, params, {12, 345, {{"note", "x"}}});
  const auto loaded = LoadCheckpoint(path, GaussianArch());
  EXPECT_EQ(loaded.params.arch, params.arch);
  EXPECT_EQ(loaded.metadata.seed, 12u);
  EXPECT_EQ(loaded.metadata.step, 345u);
  EXPECT_EQ(loaded.metadata.extra.at("note"), "x");
  ASSERT_EQ(loaded.params.values.size(), params.values.size());
  EXPECT_EQ(detail::PayloadBytes(loaded.params.values), detail::PayloadBytes(params.values));
  std::filesystem::remove(path);
}

TEST(CheckpointTest, TruncatedAndCorruptFilesAreRejected) {
  const auto params = InitParams(DiscreteArch(), 1);
  const auto path = TempPath("corrupt.ckpt");
  SaveCheckpoint(path, params, {});
  const auto size = std::filesystem::file_size(path);

  std::filesystem::resize_file(path, size - 3);
  try {
    LoadCheckpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kChecksumMismatch);
  }

  SaveCheckpoint(path, params, {});
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size - 1));
    f.put('\x55');
  }
  try {
    LoadCheckpoint(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kChecksumMismatch);
  }

  try {
    LoadCheckpoint(TempPath("does_not_exist.ckpt"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
  std::filesystem::remove(path);
}

TEST(CheckpointTest, ArchitectureMismatchIsRejected) {
  const auto path = TempPath("arch.ckpt");
  SaveCheckpoint(path, InitParams(DiscreteArch(), 1), {});
  auto other = DiscreteArch();
  other.num_options = 4;
  try {
    LoadCheckpoint(path, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormatVersionMismatch);
  }
  std::filesystem::remove(path);
}

TEST(RmsPropTest, FirstStepByHand) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
  RmsPropState state;
  RmsPropStep(theta, Eigen::VectorXd::Ones(1), 0.1, 0.99, state);
  EXPECT_NEAR(state.square_avg(0), 0.01, 1e-17);
  EXPECT_NEAR(theta(0), -0.1 / (0.1 + 1e-5), 1e-15);
  EXPECT_NEAR(theta(0), -0.9999000099990001, 1e-15);
}

TEST(RmsPropTest, MinimizesAQuadratic) {
  Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 3.0);
  RmsPropState state;
  for (int i = 0; i < 5000; ++i) {
    RmsPropStep(theta, 2.0 * (theta.array() - 1.0).matrix(), 1e-3, 0.99, state);
  }
  EXPECT_NEAR(theta(0), 1.0, 1e-2);
}

TEST(RmsPropTest, SizeMismatch) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(2);
  RmsPropState state;
  EXPECT_THROW(RmsPropStep(theta, Eigen::VectorXd::Zero(3), 0.1, 0.99, state), Error);
}

}  // namespace
}  // namespace optsep
