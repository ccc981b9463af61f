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

// Shared MLP torso with per-option value, termination and policy heads.
//
// Parameters live in one flat vector; a ParamLayout names the slices. The
// forward pass works on a batch of observations stored as matrix columns and
// keeps every intermediate needed by Backward(), which is the exact
// reverse-mode sweep over the fixed primitive set (affine, tanh/relu,
// sigmoid, softmax, probability floor, state-independent log-std).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "optsep/distances.hpp"
#include "optsep/error.hpp"
#include "optsep/rng.hpp"

namespace optsep {

inline constexpr double kDefaultPolicyFloor = 1e-4;

enum class Activation { kTanh, kRelu };

inline const char* ActivationName(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }

struct ActionSpec {
  enum class Kind { kDiscrete, kContinuous };
  Kind kind = Kind::kDiscrete;
  std::size_t size = 1;  // number of actions k, or action dimension d

  static ActionSpec Discrete(std::size_t k) { return {Kind::kDiscrete, k}; }
  static ActionSpec Continuous(std::size_t d) { return {Kind::kContinuous, d}; }

  bool discrete() const { return kind == Kind::kDiscrete; }
  friend bool operator==(const ActionSpec&, const ActionSpec&) = default;
};

struct Architecture {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kTanh;
  std::size_t num_options = 4;
  ActionSpec action = ActionSpec::Discrete(4);
  // Minimum probability of any discrete action; ignored for Gaussian heads.
  double policy_floor = kDefaultPolicyFloor;

  void Validate() const {
    Require(input_dim >= 1, ErrorCode::kInvalidArgument, "input_dim must be >= 1");
    Require(!hidden.empty(), ErrorCode::kInvalidArgument, "at least one hidden layer required");
    for (auto h : hidden) Require(h >= 1, ErrorCode::kInvalidArgument, "hidden widths must be >= 1");
    Require(num_options >= 1, ErrorCode::kInvalidArgument, "num_options must be >= 1");
    Require(action.size >= 1, ErrorCode::kInvalidArgument, "action size must be >= 1");
    if (action.discrete()) {
      Require(policy_floor >= 0.0 && policy_floor * static_cast<double>(action.size) < 1.0,
              ErrorCode::kInfeasibleClamp, "policy_floor * k must be < 1");
    }
  }

  std::size_t latent_dim() const { return hidden.back(); }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
};

class ParamLayout {
 public:
  ParamLayout() = default;

  explicit ParamLayout(const Architecture& arch) {
    arch.Validate();
    std::size_t in = arch.input_dim;
    for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
      Add("torso." + std::to_string(l) + ".weight", arch.hidden[l], in);
      Add("torso." + std::to_string(l) + ".bias", arch.hidden[l], 1);
      in = arch.hidden[l];
    }
    const std::size_t m = arch.num_options;
    Add("q.weight", m, in);
    Add("q.bias", m, 1);
    Add("beta.weight", m, in);
    Add("beta.bias", m, 1);
    const std::size_t rows = m * arch.action.size;
    if (arch.action.discrete()) {
      Add("policy.weight", rows, in);
      Add("policy.bias", rows, 1);
    } else {
      Add("policy.mean.weight", rows, in);
      Add("policy.mean.bias", rows, 1);
      Add("policy.log_std", rows, 1);
    }
  }

  const ParamSlice& Find(const std::string& name) const {
    for (const auto& s : slices_) {
      if (s.name == name) return s;
    }
    Fail(ErrorCode::kInvalidArgument, "no parameter slice named " + name);
  }

  const std::vector<ParamSlice>& slices() const { return slices_; }
  std::size_t total() const { return total_; }

 private:
  void Add(std::string name, std::size_t rows, std::size_t cols) {
    slices_.push_back({std::move(name), total_, rows, cols});
    total_ += rows * cols;
  }

  std::vector<ParamSlice> slices_;
  std::size_t total_ = 0;
};

struct AgentParams {
  Architecture arch;
  ParamLayout layout;
  Eigen::VectorXd values;

  Eigen::Map<const Eigen::MatrixXd> Matrix(const std::string& name) const {
    const auto& s = layout.Find(name);
    return {values.data() + s.offset, static_cast<Eigen::Index>(s.rows),
            static_cast<Eigen::Index>(s.cols)};
  }

  Eigen::Map<Eigen::MatrixXd> Matrix(const std::string& name) {
    const auto& s = layout.Find(name);
    return {values.data() + s.offset, static_cast<Eigen::Index>(s.rows),
            static_cast<Eigen::Index>(s.cols)};
  }

  bool AllFinite() const { return values.allFinite(); }
};

namespace detail {

inline Eigen::Map<Eigen::MatrixXd> SliceOf(Eigen::VectorXd& flat, const ParamSlice& s) {
  return {flat.data() + s.offset, static_cast<Eigen::Index>(s.rows),
          static_cast<Eigen::Index>(s.cols)};
}

}  // namespace detail

// Weights are Glorot-uniform scaled by a per-head gain (torso 1, value 1,
// termination 1, policy 0.1); biases and log-std start at zero. Each slice
// draws from its own stream, so every option head gets independent draws
// from the same distribution.
inline AgentParams InitParams(const Architecture& arch, std::uint64_t seed) {
  AgentParams params{arch, ParamLayout(arch), {}};
  params.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.layout.total()));
  std::uint64_t stream = 0;
  for (const auto& s : params.layout.slices()) {
    ++stream;
    if (s.cols == 1) continue;
    const bool is_policy = s.name.rfind("policy", 0) == 0;
    const double gain = is_policy ? 0.1 : 1.0;
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
    Rng rng(DeriveSeed(seed, stream));
    auto block = detail::SliceOf(params.values, s);
    for (Eigen::Index c = 0; c < block.cols(); ++c) {
      for (Eigen::Index r = 0; r < block.rows(); ++r) block(r, c) = bound * (2.0 * rng.Uniform() - 1.0);
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// Probability floor.

struct FlooredProbs {
  std::vector<double> probs;
  std::vector<bool> pinned;  // entry fixed at the floor
  double scale = 1.0;        // multiplier applied to free entries
  double free_mass = 1.0;    // sum of free input entries
};

// Raises every entry to at least p_min and rescales the rest so the result
// still sums to one. Entries already at or above the floor after rescaling
// keep their relative proportions; an input with all entries >= p_min is
// returned unchanged.
inline FlooredProbs FloorProbabilities(std::span<const double> p, double p_min) {
  const std::size_t k = p.size();
  Require(p_min * static_cast<double>(k) < 1.0, ErrorCode::kInfeasibleClamp,
          "p_min * k must be < 1");
  FlooredProbs out{std::vector<double>(p.begin(), p.end()), std::vector<bool>(k, false), 1.0, 0.0};
  std::size_t pinned = 0;
  for (;;) {
    double free_mass = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (!out.pinned[i]) free_mass += p[i];
    }
    const double scale = (1.0 - static_cast<double>(pinned) * p_min) / free_mass;
    bool changed = false;
    for (std::size_t i = 0; i < k; ++i) {
      if (!out.pinned[i] && p[i] * scale < p_min) {
        out.pinned[i] = true;
        ++pinned;
        changed = true;
      }
    }
    if (!changed) {
      out.scale = pinned == 0 ? 1.0 : scale;
      out.free_mass = free_mass;
      break;
    }
  }
  for (std::size_t i = 0; i < k; ++i) out.probs[i] = out.pinned[i] ? p_min : p[i] * out.scale;
  return out;
}

inline Categorical ClampPolicy(const Categorical& dist, double p_min) {
  auto floored = FloorProbabilities(dist.probs(), p_min);
  return Categorical(std::move(floored.probs));
}

// ---------------------------------------------------------------------------
// Forward / backward.

struct ForwardCache {
  // activations[0] is the input batch; activations[l+1] is hidden layer l.
  std::vector<Eigen::MatrixXd> activations;
  Eigen::MatrixXd q;          // m x B
  Eigen::MatrixXd beta;       // m x B
  Eigen::MatrixXd probs_raw;  // (m*k) x B, softmax per option block
  Eigen::MatrixXd probs;      // (m*k) x B, floored
  std::vector<FlooredProbs> floors;  // per (state, option), column-major order
  Eigen::MatrixXd mean;       // (m*d) x B
  Eigen::VectorXd log_std;    // m*d, clamped to [-20, 5]
  Eigen::VectorXd log_std_raw;

  Eigen::Index batch() const { return q.cols(); }
  const Eigen::MatrixXd& latent() const { return activations.back(); }
};

// Reverse-mode seed: partial derivatives of a scalar loss with respect to the
// network outputs. Unused heads stay empty.
struct OutputAdjoint {
  Eigen::MatrixXd q;        // m x B
  Eigen::MatrixXd beta;     // m x B
  Eigen::MatrixXd probs;    // (m*k) x B, w.r.t. floored probabilities
  Eigen::MatrixXd mean;     // (m*d) x B
  Eigen::VectorXd log_std;  // m*d

  static OutputAdjoint ZerosFor(const Architecture& arch, Eigen::Index batch) {
    const auto m = static_cast<Eigen::Index>(arch.num_options);
    const auto rows = static_cast<Eigen::Index>(arch.num_options * arch.action.size);
    OutputAdjoint adj;
    adj.q = Eigen::MatrixXd::Zero(m, batch);
    adj.beta = Eigen::MatrixXd::Zero(m, batch);
    if (arch.action.discrete()) {
      adj.probs = Eigen::MatrixXd::Zero(rows, batch);
    } else {
      adj.mean = Eigen::MatrixXd::Zero(rows, batch);
      adj.log_std = Eigen::VectorXd::Zero(rows);
    }
    return adj;
  }
};

namespace detail {

inline Eigen::MatrixXd Activate(const Eigen::MatrixXd& pre, Activation a) {
  if (a == Activation::kTanh) return pre.array().tanh().matrix();
  return pre.cwiseMax(0.0);
}

inline Eigen::MatrixXd ActivationGrad(const Eigen::MatrixXd& post, Activation a) {
  if (a == Activation::kTanh) return (1.0 - post.array().square()).matrix();
  return (post.array() > 0.0).cast<double>().matrix();
}

}  // namespace detail

inline ForwardCache Forward(const AgentParams& params, const Eigen::MatrixXd& obs) {
  const auto& arch = params.arch;
  Require(obs.rows() == static_cast<Eigen::Index>(arch.input_dim), ErrorCode::kDimensionMismatch,
          "observation dimension " + std::to_string(obs.rows()) + " != architecture input " +
              std::to_string(arch.input_dim));
  ForwardCache cache;
  cache.activations.reserve(arch.hidden.size() + 1);
  cache.activations.push_back(obs);
  for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
    const std::string prefix = "torso." + std::to_string(l);
    Eigen::MatrixXd pre = params.Matrix(prefix + ".weight") * cache.activations.back();
    pre.colwise() += Eigen::VectorXd(params.Matrix(prefix + ".bias"));
    cache.activations.push_back(detail::Activate(pre, arch.activation));
  }
  const Eigen::MatrixXd& z = cache.activations.back();

  cache.q = params.Matrix("q.weight") * z;
  cache.q.colwise() += Eigen::VectorXd(params.Matrix("q.bias"));

  Eigen::MatrixXd beta_logit = params.Matrix("beta.weight") * z;
  beta_logit.colwise() += Eigen::VectorXd(params.Matrix("beta.bias"));
  cache.beta = (1.0 / (1.0 + (-beta_logit.array()).exp())).matrix();

  const auto m = static_cast<Eigen::Index>(arch.num_options);
  const auto k = static_cast<Eigen::Index>(arch.action.size);
  const Eigen::Index batch = obs.cols();
  if (arch.action.discrete()) {
    Eigen::MatrixXd logits = params.Matrix("policy.weight") * z;
    logits.colwise() += Eigen::VectorXd(params.Matrix("policy.bias"));
    cache.probs_raw.resize(m * k, batch);
    cache.probs.resize(m * k, batch);
    cache.floors.reserve(static_cast<std::size_t>(m * batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index w = 0; w < m; ++w) {
        auto block = logits.block(w * k, b, k, 1);
        Eigen::VectorXd e = (block.array() - block.maxCoeff()).exp();
        e /= e.sum();
        cache.probs_raw.block(w * k, b, k, 1) = e;
        auto floored = FloorProbabilities(std::span<const double>(e.data(), e.size()),
                                          arch.policy_floor);
        for (Eigen::Index x = 0; x < k; ++x) cache.probs(w * k + x, b) = floored.probs[x];
        cache.floors.push_back(std::move(floored));
      }
    }
  } else {
    cache.mean = params.Matrix("policy.mean.weight") * z;
    cache.mean.colwise() += Eigen::VectorXd(params.Matrix("policy.mean.bias"));
    cache.log_std_raw = params.Matrix("policy.log_std");
    cache.log_std = cache.log_std_raw.cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd);
  }
  return cache;
}

inline ForwardCache Forward(const AgentParams& params, std::span<const double> obs) {
  Eigen::MatrixXd column(static_cast<Eigen::Index>(obs.size()), 1);
  for (std::size_t i = 0; i < obs.size(); ++i) column(static_cast<Eigen::Index>(i), 0) = obs[i];
  return Forward(params, column);
}

inline Eigen::VectorXd Backward(const AgentParams& params, const ForwardCache& cache,
                                const OutputAdjoint& adj) {
  const auto& arch = params.arch;
  const Eigen::Index batch = cache.batch();
  const auto m = static_cast<Eigen::Index>(arch.num_options);
  const auto k = static_cast<Eigen::Index>(arch.action.size);
  auto check = [&](const Eigen::MatrixXd& mat, Eigen::Index rows, Eigen::Index cols,
                   const char* what) {
    Require(mat.rows() == rows && mat.cols() == cols, ErrorCode::kShapeMismatch,
            std::string("adjoint shape mismatch for ") + what);
  };
  check(adj.q, m, batch, "q");
  check(adj.beta, m, batch, "beta");
  if (arch.action.discrete()) {
    Require(adj.mean.size() == 0 && adj.log_std.size() == 0, ErrorCode::kUnsupportedPrimitive,
            "gaussian adjoint supplied for a discrete policy head");
    check(adj.probs, m * k, batch, "probs");
  } else {
    Require(adj.probs.size() == 0, ErrorCode::kUnsupportedPrimitive,
            "categorical adjoint supplied for a gaussian policy head");
    check(adj.mean, m * k, batch, "mean");
    Require(adj.log_std.size() == m * k, ErrorCode::kShapeMismatch, "adjoint shape mismatch for log_std");
  }

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.values.size());
  auto slice = [&](const std::string& name) { return detail::SliceOf(grad, params.layout.Find(name)); };
  const Eigen::MatrixXd& z = cache.latent();

  slice("q.weight") = adj.q * z.transpose();
  slice("q.bias") = adj.q.rowwise().sum();
  Eigen::MatrixXd dz = params.Matrix("q.weight").transpose() * adj.q;

  const Eigen::MatrixXd d_beta_logit =
      (adj.beta.array() * cache.beta.array() * (1.0 - cache.beta.array())).matrix();
  slice("beta.weight") = d_beta_logit * z.transpose();
  slice("beta.bias") = d_beta_logit.rowwise().sum();
  dz += params.Matrix("beta.weight").transpose() * d_beta_logit;

  if (arch.action.discrete()) {
    Eigen::MatrixXd d_logits(m * k, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index w = 0; w < m; ++w) {
        const auto& floored = cache.floors[static_cast<std::size_t>(b * m + w)];
        // Back through the floor: pinned entries are constant; free entries
        // are p_i * (1 - n_pinned * p_min) / free_mass.
        Eigen::VectorXd d_raw = Eigen::VectorXd::Zero(k);
        double weighted = 0.0;
        for (Eigen::Index x = 0; x < k; ++x) {
          if (!floored.pinned[x]) weighted += adj.probs(w * k + x, b) * cache.probs_raw(w * k + x, b);
        }
        bool any_pinned = false;
        for (Eigen::Index x = 0; x < k; ++x) any_pinned = any_pinned || floored.pinned[x];
        for (Eigen::Index x = 0; x < k; ++x) {
          if (floored.pinned[x]) continue;
          d_raw(x) = any_pinned ? floored.scale * (adj.probs(w * k + x, b) - weighted / floored.free_mass)
                                : adj.probs(w * k + x, b);
        }
        // Back through the softmax.
        const Eigen::VectorXd p = cache.probs_raw.col(b).segment(w * k, k);
        const double dot = d_raw.dot(p);
        d_logits.block(w * k, b, k, 1) = (p.array() * (d_raw.array() - dot)).matrix();
      }
    }
    slice("policy.weight") = d_logits * z.transpose();
    slice("policy.bias") = d_logits.rowwise().sum();
    dz += params.Matrix("policy.weight").transpose() * d_logits;
  } else {
    slice("policy.mean.weight") = adj.mean * z.transpose();
    slice("policy.mean.bias") = adj.mean.rowwise().sum();
    dz += params.Matrix("policy.mean.weight").transpose() * adj.mean;
    Eigen::VectorXd d_log_std = adj.log_std;
    for (Eigen::Index i = 0; i < d_log_std.size(); ++i) {
      const double raw = cache.log_std_raw(i);
      if (raw < kMinLogStd || raw > kMaxLogStd) d_log_std(i) = 0.0;
    }
    slice("policy.log_std") = d_log_std;
  }

  for (std::size_t l = arch.hidden.size(); l-- > 0;) {
    const std::string prefix = "torso." + std::to_string(l);
    const Eigen::MatrixXd d_pre =
        (dz.array() * detail::ActivationGrad(cache.activations[l + 1], arch.activation).array()).matrix();
    slice(prefix + ".weight") = d_pre * cache.activations[l].transpose();
    slice(prefix + ".bias") = d_pre.rowwise().sum();
    if (l > 0) dz = params.Matrix(prefix + ".weight").transpose() * d_pre;
  }
  return grad;
}

// A scalar loss over network outputs: returns the value and its adjoint.
using OutputLoss = std::function<std::pair<double, OutputAdjoint>(const ForwardCache&)>;

struct ScalarGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

inline ScalarGradient GradOfScalar(const AgentParams& params, const Eigen::MatrixXd& obs,
                                   const OutputLoss& loss) {
  const ForwardCache cache = Forward(params, obs);
  auto [value, adjoint] = loss(cache);
  return {value, Backward(params, cache, adjoint)};
}

// ---------------------------------------------------------------------------
// Per-state views of a batch.

inline Categorical PolicyCategorical(const ForwardCache& cache, const Architecture& arch,
                                     Eigen::Index sample, std::size_t option) {
  const auto k = static_cast<Eigen::Index>(arch.action.size);
  const auto row = static_cast<Eigen::Index>(option) * k;
  std::vector<double> p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (Eigen::Index x = 0; x < k; ++x) total += (p[x] = cache.probs(row + x, sample));
  for (double& v : p) v /= total;  // absorb last-ulp drift
  return Categorical(std::move(p));
}

inline DiagGaussian PolicyGaussian(const ForwardCache& cache, const Architecture& arch,
                                   Eigen::Index sample, std::size_t option) {
  const auto d = static_cast<Eigen::Index>(arch.action.size);
  const auto row = static_cast<Eigen::Index>(option) * d;
  std::vector<double> mean(static_cast<std::size_t>(d)), log_std(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    mean[j] = cache.mean(row + j, sample);
    log_std[j] = cache.log_std(row + j);
  }
  return DiagGaussian(std::move(mean), std::move(log_std));
}

inline ProbDist Policy(const ForwardCache& cache, const Architecture& arch, Eigen::Index sample,
                       std::size_t option) {
  if (arch.action.discrete()) return PolicyCategorical(cache, arch, sample, option);
  return PolicyGaussian(cache, arch, sample, option);
}

struct NetworkOutputs {
  std::vector<double> q_omega;
  std::vector<double> beta;
  std::vector<ProbDist> policies;
  std::vector<double> latent;
};

inline NetworkOutputs OutputsAt(const ForwardCache& cache, const Architecture& arch,
                                Eigen::Index sample) {
  NetworkOutputs out;
  const auto m = static_cast<Eigen::Index>(arch.num_options);
  for (Eigen::Index w = 0; w < m; ++w) {
    out.q_omega.push_back(cache.q(w, sample));
    out.beta.push_back(cache.beta(w, sample));
    out.policies.push_back(Policy(cache, arch, sample, static_cast<std::size_t>(w)));
  }
  const auto& z = cache.latent();
  out.latent.assign(z.col(sample).data(), z.col(sample).data() + z.rows());
  return out;
}

inline NetworkOutputs Evaluate(const AgentParams& params, std::span<const double> obs) {
  return OutputsAt(Forward(params, obs), params.arch, 0);
}

}  // namespace optsep
