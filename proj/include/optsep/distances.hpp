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

// Statistical distances between action distributions.
//
// Categorical distances follow the convention 0 * log 0 = 0 and use the
// natural logarithm. Gaussian distances are closed forms for diagonal
// covariance. Every function here is pure.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "optsep/error.hpp"

namespace optsep {

inline constexpr double kProbSumTolerance = 1e-9;
inline constexpr double kMinLogStd = -20.0;
inline constexpr double kMaxLogStd = 5.0;

class Categorical {
 public:
  Categorical() = default;

  explicit Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
    Require(!probs_.empty(), ErrorCode::kInvalidArgument, "categorical needs k >= 1");
    double total = 0.0;
    for (double p : probs_) {
      Require(std::isfinite(p) && p >= 0.0, ErrorCode::kInvalidArgument,
              "categorical entries must be finite and non-negative");
      total += p;
    }
    Require(std::abs(total - 1.0) <= kProbSumTolerance, ErrorCode::kInvalidArgument,
            "categorical entries must sum to 1 (got " + std::to_string(total) + ")");
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  friend bool operator==(const Categorical&, const Categorical&) = default;

 private:
  std::vector<double> probs_;
};

class DiagGaussian {
 public:
  DiagGaussian() = default;

  DiagGaussian(std::vector<double> mean, std::vector<double> log_std)
      : mean_(std::move(mean)), log_std_(std::move(log_std)) {
    Require(mean_.size() == log_std_.size(), ErrorCode::kDimensionMismatch,
            "gaussian mean and log_std dimensions differ");
    Require(!mean_.empty(), ErrorCode::kInvalidArgument, "gaussian needs d >= 1");
    for (std::size_t j = 0; j < mean_.size(); ++j) {
      Require(std::isfinite(mean_[j]) && std::isfinite(log_std_[j]), ErrorCode::kInvalidArgument,
              "gaussian parameters must be finite");
      Require(log_std_[j] >= kMinLogStd && log_std_[j] <= kMaxLogStd,
              ErrorCode::kInvalidArgument, "gaussian log_std outside [-20, 5]");
    }
  }

  std::size_t size() const { return mean_.size(); }
  std::span<const double> mean() const { return mean_; }
  std::span<const double> log_std() const { return log_std_; }
  double stddev(std::size_t j) const { return std::exp(log_std_[j]); }

  friend bool operator==(const DiagGaussian&, const DiagGaussian&) = default;

 private:
  std::vector<double> mean_;
  std::vector<double> log_std_;
};

using ProbDist = std::variant<Categorical, DiagGaussian>;

enum class DistanceKind { kKLD, kHD, kJSD, kFDiv };

inline const char* DistanceKindName(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::kKLD: return "KLD";
    case DistanceKind::kHD: return "HD";
    case DistanceKind::kJSD: return "JSD";
    case DistanceKind::kFDiv: return "FDiv";
  }
  return "?";
}

// A divergence value. An unbounded divergence (support violation) is carried
// as +infinity and must be tested with infinite(), never compared as a float.
struct DistanceValue {
  DistanceKind kind = DistanceKind::kFDiv;
  double value = 0.0;

  bool infinite() const { return std::isinf(value); }
};

// Generator f of an f-divergence. f must be convex with f(1) = 0.
// f_at_zero is lim_{t->0+} f(t); slope_at_infinity is lim_{t->inf} f(t)/t,
// which prices mass of P where Q vanishes (+inf means undefined).
struct ConvexGenerator {
  std::function<double(double)> f;
  double f_at_zero = 0.0;
  double slope_at_infinity = std::numeric_limits<double>::infinity();
};

inline ConvexGenerator KullbackLeiblerGenerator() {
  return {[](double t) { return t * std::log(t); }, 0.0,
          std::numeric_limits<double>::infinity()};
}

// D_f with this generator equals the squared Hellinger distance.
inline ConvexGenerator HellingerGenerator() {
  return {[](double t) { return 1.0 - std::sqrt(t); }, 1.0, 0.0};
}

namespace detail {

inline void CheckSameSize(std::size_t a, std::size_t b) {
  Require(a == b, ErrorCode::kDimensionMismatch,
          "distribution dimensions differ (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

inline double KldRaw(std::span<const double> p, std::span<const double> q) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    total += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(total, 0.0);
}

// sum_i (sqrt p_i - sqrt q_i)^2 = 2 H^2
inline double SquaredRootDiff(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    s += d * d;
  }
  return s;
}

inline double GaussianLogBhattacharyya(const DiagGaussian& p, const DiagGaussian& q) {
  double log_bc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double lp = p.log_std()[j];
    const double lq = q.log_std()[j];
    const double s = std::exp(2.0 * lp) + std::exp(2.0 * lq);
    const double delta = p.mean()[j] - q.mean()[j];
    // 2 sp sq / (sp^2 + sq^2) = 1 / cosh(lp - lq)
    log_bc += -0.5 * std::log(std::cosh(lp - lq)) - delta * delta / (4.0 * s);
  }
  return std::min(log_bc, 0.0);
}

}  // namespace detail

inline DistanceValue FDivergence(const ConvexGenerator& gen, const Categorical& p,
                                 const Categorical& q) {
  detail::CheckSameSize(p.size(), q.size());
  double total = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (q[x] == 0.0) {
      if (p[x] == 0.0) continue;
      Require(std::isfinite(gen.slope_at_infinity), ErrorCode::kDivergenceUndefined,
              "Q(x) = 0 where P(x) > 0 and f is unbounded at infinity");
      total += p[x] * gen.slope_at_infinity;
    } else if (p[x] == 0.0) {
      total += q[x] * gen.f_at_zero;
    } else {
      total += q[x] * gen.f(p[x] / q[x]);
    }
  }
  return {DistanceKind::kFDiv, std::max(total, 0.0)};
}

inline DistanceValue KullbackLeibler(const Categorical& p, const Categorical& q) {
  detail::CheckSameSize(p.size(), q.size());
  return {DistanceKind::kKLD, detail::KldRaw(p.probs(), q.probs())};
}

inline DistanceValue KullbackLeibler(const DiagGaussian& p, const DiagGaussian& q) {
  detail::CheckSameSize(p.size(), q.size());
  double total = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double lp = p.log_std()[j];
    const double lq = q.log_std()[j];
    const double delta = p.mean()[j] - q.mean()[j];
    total += (lq - lp) + (std::exp(2.0 * lp) + delta * delta) / (2.0 * std::exp(2.0 * lq)) - 0.5;
  }
  return {DistanceKind::kKLD, std::max(total, 0.0)};
}

inline DistanceValue Hellinger(const Categorical& p, const Categorical& q) {
  detail::CheckSameSize(p.size(), q.size());
  // Disjoint supports are exactly 1 even when the masses round below 1.
  double overlap = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) overlap += std::sqrt(p[i] * q[i]);
  if (overlap == 0.0) return {DistanceKind::kHD, 1.0};
  const double h = std::sqrt(0.5 * detail::SquaredRootDiff(p.probs(), q.probs()));
  return {DistanceKind::kHD, std::min(h, 1.0)};
}

inline DistanceValue Hellinger(const DiagGaussian& p, const DiagGaussian& q) {
  detail::CheckSameSize(p.size(), q.size());
  // 1 - BC via expm1 keeps precision when the distributions nearly coincide.
  const double one_minus_bc = -std::expm1(detail::GaussianLogBhattacharyya(p, q));
  return {DistanceKind::kHD, std::sqrt(std::clamp(one_minus_bc, 0.0, 1.0))};
}

inline DistanceValue JensenShannon(const Categorical& p, const Categorical& q) {
  detail::CheckSameSize(p.size(), q.size());
  std::vector<double> mid(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) mid[i] = 0.5 * (p[i] + q[i]);
  const double value = 0.5 * detail::KldRaw(p.probs(), mid) + 0.5 * detail::KldRaw(q.probs(), mid);
  return {DistanceKind::kJSD, std::clamp(value, 0.0, std::numbers::ln2)};
}

inline DistanceValue Hellinger(const ProbDist& p, const ProbDist& q) {
  Require(p.index() == q.index(), ErrorCode::kMixedFamilies,
          "hellinger between different distribution families");
  if (const auto* cp = std::get_if<Categorical>(&p)) return Hellinger(*cp, std::get<Categorical>(q));
  return Hellinger(std::get<DiagGaussian>(p), std::get<DiagGaussian>(q));
}

inline DistanceValue KullbackLeibler(const ProbDist& p, const ProbDist& q) {
  Require(p.index() == q.index(), ErrorCode::kMixedFamilies,
          "kl divergence between different distribution families");
  if (const auto* cp = std::get_if<Categorical>(&p)) {
    return KullbackLeibler(*cp, std::get<Categorical>(q));
  }
  return KullbackLeibler(std::get<DiagGaussian>(p), std::get<DiagGaussian>(q));
}

namespace detail {

inline void CheckRegularizerInputs(std::span<const ProbDist> dists) {
  Require(dists.size() >= 2, ErrorCode::kTooFewOptions,
          "hd regularizer needs at least two options");
  const auto family = dists.front().index();
  const auto dim = std::visit([](const auto& d) { return d.size(); }, dists.front());
  for (const auto& d : dists) {
    Require(d.index() == family, ErrorCode::kMixedFamilies,
            "hd regularizer inputs mix distribution families");
    CheckSameSize(dim, std::visit([](const auto& x) { return x.size(); }, d));
  }
}

}  // namespace detail

// Mean Hellinger distance over the m(m-1)/2 unordered pairs of options.
inline double HdRegularizer(std::span<const ProbDist> dists) {
  detail::CheckRegularizerInputs(dists);
  const std::size_t m = dists.size();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) total += Hellinger(dists[i], dists[j]).value;
  }
  return total / static_cast<double>(m * (m - 1) / 2);
}

inline double HdRegularizer(std::span<const Categorical> dists) {
  std::vector<ProbDist> all(dists.begin(), dists.end());
  return HdRegularizer(std::span<const ProbDist>(all));
}

inline double HdRegularizer(std::span<const DiagGaussian> dists) {
  std::vector<ProbDist> all(dists.begin(), dists.end());
  return HdRegularizer(std::span<const ProbDist>(all));
}

// ---------------------------------------------------------------------------
// Gradients. At coincident distributions the square root has no derivative;
// the pair then contributes a zero (sub)gradient.

// dH/dP and dH/dQ for raw probability vectors. Entries of P that are exactly
// zero get an infinite partial unless Q is also zero there; use the logit
// form below when probabilities can vanish.
inline std::pair<std::vector<double>, std::vector<double>> HellingerGradient(
    std::span<const double> p, std::span<const double> q) {
  detail::CheckSameSize(p.size(), q.size());
  std::vector<double> dp(p.size(), 0.0), dq(q.size(), 0.0);
  const double s = detail::SquaredRootDiff(p, q);
  if (s <= 0.0) return {dp, dq};
  const double scale = 1.0 / (2.0 * std::numbers::sqrt2 * std::sqrt(s));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double rp = std::sqrt(p[i]);
    const double rq = std::sqrt(q[i]);
    const double diff = rp - rq;
    if (diff == 0.0) continue;
    dp[i] = scale * diff / rp;
    dq[i] = -scale * diff / rq;
  }
  return {dp, dq};
}

struct GaussianGradient {
  std::vector<double> d_mean;
  std::vector<double> d_log_std;
};

inline std::pair<GaussianGradient, GaussianGradient> HellingerGradient(const DiagGaussian& p,
                                                                       const DiagGaussian& q) {
  detail::CheckSameSize(p.size(), q.size());
  const std::size_t d = p.size();
  GaussianGradient gp{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  GaussianGradient gq = gp;
  const double log_bc = detail::GaussianLogBhattacharyya(p, q);
  const double one_minus_bc = -std::expm1(log_bc);
  if (one_minus_bc <= 0.0) return {gp, gq};
  const double h = std::sqrt(std::min(one_minus_bc, 1.0));
  const double dh_dlogbc = -std::exp(log_bc) / (2.0 * h);
  for (std::size_t j = 0; j < d; ++j) {
    const double vp = std::exp(2.0 * p.log_std()[j]);
    const double vq = std::exp(2.0 * q.log_std()[j]);
    const double s = vp + vq;
    const double delta = p.mean()[j] - q.mean()[j];
    gp.d_mean[j] = dh_dlogbc * (-delta / (2.0 * s));
    gq.d_mean[j] = -gp.d_mean[j];
    gp.d_log_std[j] = dh_dlogbc * (0.5 - vp / s + delta * delta * vp / (2.0 * s * s));
    gq.d_log_std[j] = dh_dlogbc * (0.5 - vq / s + delta * delta * vq / (2.0 * s * s));
  }
  return {gp, gq};
}

// Gradient of HdRegularizer with respect to each option's probabilities.
inline std::vector<std::vector<double>> HdRegularizerGradient(std::span<const Categorical> dists) {
  std::vector<ProbDist> all(dists.begin(), dists.end());
  detail::CheckRegularizerInputs(all);
  const std::size_t m = dists.size();
  const double inv_pairs = 1.0 / static_cast<double>(m * (m - 1) / 2);
  std::vector<std::vector<double>> grad(m, std::vector<double>(dists.front().size(), 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      auto [gi, gj] = HellingerGradient(dists[i].probs(), dists[j].probs());
      for (std::size_t x = 0; x < gi.size(); ++x) {
        grad[i][x] += inv_pairs * gi[x];
        grad[j][x] += inv_pairs * gj[x];
      }
    }
  }
  return grad;
}

inline std::vector<double> Softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  const double top = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

// HdRegularizer of softmax(logits_i) and its gradient with respect to the
// logits. The chain through the softmax is taken analytically, so vanishing
// probabilities stay finite.
inline std::pair<double, std::vector<std::vector<double>>> HdRegularizerWithLogitGradient(
    std::span<const std::vector<double>> logits) {
  Require(logits.size() >= 2, ErrorCode::kTooFewOptions,
          "hd regularizer needs at least two options");
  const std::size_t m = logits.size();
  const std::size_t k = logits.front().size();
  std::vector<std::vector<double>> probs;
  std::vector<std::vector<double>> roots;
  for (const auto& z : logits) {
    detail::CheckSameSize(k, z.size());
    probs.push_back(Softmax(z));
    std::vector<double> r(k);
    for (std::size_t x = 0; x < k; ++x) r[x] = std::sqrt(probs.back()[x]);
    roots.push_back(std::move(r));
  }
  const double inv_pairs = 1.0 / static_cast<double>(m * (m - 1) / 2);
  double value = 0.0;
  // dL/dp_i(x) * p_i(x), accumulated; finite even when p_i(x) -> 0.
  std::vector<std::vector<double>> weighted(m, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double s = detail::SquaredRootDiff(probs[i], probs[j]);
      value += inv_pairs * std::min(std::sqrt(0.5 * s), 1.0);
      if (s <= 0.0) continue;
      const double scale = inv_pairs / (2.0 * std::numbers::sqrt2 * std::sqrt(s));
      for (std::size_t x = 0; x < k; ++x) {
        const double diff = roots[i][x] - roots[j][x];
        weighted[i][x] += scale * diff * roots[i][x];
        weighted[j][x] -= scale * diff * roots[j][x];
      }
    }
  }
  std::vector<std::vector<double>> grad(m, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    double dot = 0.0;
    for (std::size_t x = 0; x < k; ++x) dot += weighted[i][x];
    for (std::size_t x = 0; x < k; ++x) grad[i][x] = weighted[i][x] - probs[i][x] * dot;
  }
  return {value, grad};
}

inline std::vector<GaussianGradient> HdRegularizerGradient(std::span<const DiagGaussian> dists) {
  std::vector<ProbDist> all(dists.begin(), dists.end());
  detail::CheckRegularizerInputs(all);
  const std::size_t m = dists.size();
  const std::size_t d = dists.front().size();
  const double inv_pairs = 1.0 / static_cast<double>(m * (m - 1) / 2);
  std::vector<GaussianGradient> grad(
      m, GaussianGradient{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      auto [gi, gj] = HellingerGradient(dists[i], dists[j]);
      for (std::size_t x = 0; x < d; ++x) {
        grad[i].d_mean[x] += inv_pairs * gi.d_mean[x];
        grad[i].d_log_std[x] += inv_pairs * gi.d_log_std[x];
        grad[j].d_mean[x] += inv_pairs * gj.d_mean[x];
        grad[j].d_log_std[x] += inv_pairs * gj.d_log_std[x];
      }
    }
  }
  return grad;
}

}  // namespace optsep
