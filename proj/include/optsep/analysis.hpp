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

// Post-hoc diagnostics over trained agents and logged trajectories.

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "optsep/distances.hpp"
#include "optsep/error.hpp"
#include "optsep/network.hpp"
#include "optsep/trainer.hpp"

namespace optsep {

// ---------------------------------------------------------------------------
// Option use rate.

struct UsageTable {
  std::vector<double> percent;  // per option, sums to 100
  std::size_t total_steps = 0;
};

inline UsageTable OptionUsageFromCounts(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  Require(total > 0, ErrorCode::kEmptyLog, "no option decisions recorded");
  UsageTable table;
  table.total_steps = total;
  for (auto c : counts) table.percent.push_back(100.0 * static_cast<double>(c) / static_cast<double>(total));
  return table;
}

inline UsageTable OptionUsage(std::span<const std::size_t> active_options, std::size_t num_options) {
  std::vector<std::size_t> counts(num_options, 0);
  for (auto o : active_options) {
    Require(o < num_options, ErrorCode::kInvalidArgument, "option index out of range");
    ++counts[o];
  }
  return OptionUsageFromCounts(counts);
}

inline nlohmann::json ToJson(const UsageTable& t) {
  return {{"percent", t.percent}, {"total_steps", t.total_steps}};
}

// ---------------------------------------------------------------------------
// Pairwise distances between intra-option policies.

struct DistanceReport {
  DistanceKind kind = DistanceKind::kHD;
  double mean = 0.0;
  double std = 0.0;
  std::vector<std::vector<double>> matrix;  // m x m, per-pair mean over states
  std::size_t state_sample_size = 0;
  std::size_t infinite_pairs = 0;  // (state, pair) evaluations that were infinite
};

// HD uses unordered pairs and a symmetric matrix; KLD keeps both directions.
// mean/std are over all finite (state, pair) values.
inline DistanceReport PairwiseDistanceReport(const AgentParams& params,
                                             const std::vector<std::vector<double>>& states,
                                             DistanceKind kind) {
  Require(!states.empty(), ErrorCode::kEmptySample, "no states to evaluate");
  Require(kind == DistanceKind::kHD || kind == DistanceKind::kKLD, ErrorCode::kInvalidArgument,
          "distance report supports HD and KLD");
  const std::size_t m = params.arch.num_options;
  Require(m >= 2, ErrorCode::kTooFewOptions, "distance report needs at least two options");

  Eigen::MatrixXd obs(static_cast<Eigen::Index>(params.arch.input_dim),
                      static_cast<Eigen::Index>(states.size()));
  for (std::size_t s = 0; s < states.size(); ++s) {
    Require(states[s].size() == params.arch.input_dim, ErrorCode::kDimensionMismatch,
            "state dimension does not match the agent");
    for (std::size_t j = 0; j < states[s].size(); ++j) {
      obs(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(s)) = states[s][j];
    }
  }
  const ForwardCache cache = Forward(params, obs);

  DistanceReport report;
  report.kind = kind;
  report.state_sample_size = states.size();
  std::vector<std::vector<double>> sums(m, std::vector<double>(m, 0.0));
  std::vector<std::vector<std::size_t>> finite(m, std::vector<std::size_t>(m, 0));
  double total = 0.0, total_sq = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < states.size(); ++s) {
    std::vector<ProbDist> policies;
    for (std::size_t o = 0; o < m; ++o) policies.push_back(Policy(cache, params.arch, static_cast<Eigen::Index>(s), o));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        if (kind == DistanceKind::kHD && j < i) continue;
        const double v = kind == DistanceKind::kHD ? Hellinger(policies[i], policies[j]).value
                                                   : KullbackLeibler(policies[i], policies[j]).value;
        if (std::isinf(v)) {
          ++report.infinite_pairs;
          continue;
        }
        sums[i][j] += v;
        ++finite[i][j];
        total += v;
        total_sq += v * v;
        ++n;
      }
    }
  }
  report.matrix.assign(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j || (kind == DistanceKind::kHD && j < i)) continue;
      report.matrix[i][j] = finite[i][j] > 0 ? sums[i][j] / static_cast<double>(finite[i][j])
                                             : std::numeric_limits<double>::infinity();
      if (kind == DistanceKind::kHD) report.matrix[j][i] = report.matrix[i][j];
    }
  }
  if (n > 0) {
    report.mean = total / static_cast<double>(n);
    report.std = std::sqrt(std::max(0.0, total_sq / static_cast<double>(n) - report.mean * report.mean));
  } else {
    report.mean = std::numeric_limits<double>::infinity();
  }
  return report;
}

namespace detail {

// Infinite values render as the string "inf".
inline nlohmann::json FiniteOrInf(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace detail

inline nlohmann::json ToJson(const DistanceReport& r) {
  nlohmann::json matrix = nlohmann::json::array();
  for (const auto& row : r.matrix) {
    nlohmann::json jrow = nlohmann::json::array();
    for (double v : row) jrow.push_back(detail::FiniteOrInf(v));
    matrix.push_back(jrow);
  }
  return {{"measure", DistanceKindName(r.kind)},
          {"mean", detail::FiniteOrInf(r.mean)},
          {"std", r.std},
          {"matrix", matrix},
          {"state_sample_size", r.state_sample_size},
          {"infinite_pairs", r.infinite_pairs}};
}

// ---------------------------------------------------------------------------
// Intrinsic reward histograms.

struct IntrinsicSample {
  std::size_t option = 0;
  std::map<std::string, double> intrinsic;
};

struct HistogramTable {
  std::size_t num_options = 0;
  std::size_t bins = 0;
  std::vector<std::string> labels;
  std::vector<double> lo, hi;  // per label, shared by all options
  // counts[label][option][bin]
  std::vector<std::vector<std::vector<std::size_t>>> counts;
  // means[label][option]; NaN where the option never ran
  std::vector<std::vector<double>> means;
  std::vector<std::size_t> samples_per_option;
};

// Uniform bins over [min, max] of each label across all options, so option
// rows are directly comparable. A degenerate range is widened to +-0.5; the
// maximum falls in the last bin.
inline HistogramTable IntrinsicRewardHistograms(std::span<const IntrinsicSample> samples,
                                                std::size_t num_options, std::size_t bins) {
  Require(bins >= 1, ErrorCode::kInvalidArgument, "need at least one bin");
  Require(!samples.empty(), ErrorCode::kEmptyLog, "no transitions");
  std::set<std::string> label_set;
  for (const auto& s : samples) {
    for (const auto& [label, v] : s.intrinsic) label_set.insert(label);
  }
  Require(!label_set.empty(), ErrorCode::kNoIntrinsics,
          "environment exposes no intrinsic rewards");

  HistogramTable table;
  table.num_options = num_options;
  table.bins = bins;
  table.labels.assign(label_set.begin(), label_set.end());
  table.samples_per_option.assign(num_options, 0);
  for (const auto& s : samples) {
    Require(s.option < num_options, ErrorCode::kInvalidArgument, "option index out of range");
    ++table.samples_per_option[s.option];
  }
  for (const auto& label : table.labels) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::vector<double> sum(num_options, 0.0);
    std::vector<std::size_t> n(num_options, 0);
    for (const auto& s : samples) {
      const auto it = s.intrinsic.find(label);
      Require(it != s.intrinsic.end(), ErrorCode::kNoIntrinsics,
              "transition missing intrinsic reward " + label);
      lo = std::min(lo, it->second);
      hi = std::max(hi, it->second);
      sum[s.option] += it->second;
      ++n[s.option];
    }
    if (hi - lo <= 0.0) {
      lo -= 0.5;
      hi += 0.5;
    }
    std::vector<std::vector<std::size_t>> counts(num_options, std::vector<std::size_t>(bins, 0));
    const double width = (hi - lo) / static_cast<double>(bins);
    for (const auto& s : samples) {
      const double v = s.intrinsic.at(label);
      auto bin = static_cast<std::size_t>((v - lo) / width);
      bin = std::min(bin, bins - 1);
      ++counts[s.option][bin];
    }
    std::vector<double> means(num_options, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t o = 0; o < num_options; ++o) {
      if (n[o] > 0) means[o] = sum[o] / static_cast<double>(n[o]);
    }
    table.lo.push_back(lo);
    table.hi.push_back(hi);
    table.counts.push_back(std::move(counts));
    table.means.push_back(std::move(means));
  }
  return table;
}

inline std::vector<IntrinsicSample> IntrinsicSamplesFrom(std::span<const EvalStep> steps) {
  std::vector<IntrinsicSample> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back({s.option, s.intrinsic});
  return out;
}

namespace detail {

inline std::string Decimal17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

// Columns: label,option,bin,bin_lo,bin_hi,count
inline std::string HistogramCsv(const HistogramTable& t) {
  std::ostringstream os;
  os << "label,option,bin,bin_lo,bin_hi,count\n";
  for (std::size_t l = 0; l < t.labels.size(); ++l) {
    const double width = (t.hi[l] - t.lo[l]) / static_cast<double>(t.bins);
    for (std::size_t o = 0; o < t.num_options; ++o) {
      for (std::size_t b = 0; b < t.bins; ++b) {
        os << t.labels[l] << ',' << o << ',' << b << ',' << detail::Decimal17(t.lo[l] + width * b) << ','
           << detail::Decimal17(t.lo[l] + width * (b + 1)) << ',' << t.counts[l][o][b] << '\n';
      }
    }
  }
  return os.str();
}

// Largest difference between per-option means of one label, over options
// that ran for at least min_share of the samples. 0 when fewer than two
// options qualify.
inline double OptionMeanSpread(const HistogramTable& t, const std::string& label, double min_share) {
  const auto it = std::find(t.labels.begin(), t.labels.end(), label);
  Require(it != t.labels.end(), ErrorCode::kNoIntrinsics, "no intrinsic reward named " + label);
  const auto l = static_cast<std::size_t>(it - t.labels.begin());
  std::size_t total = 0;
  for (auto c : t.samples_per_option) total += c;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t qualifying = 0;
  for (std::size_t o = 0; o < t.num_options; ++o) {
    if (t.samples_per_option[o] == 0 ||
        static_cast<double>(t.samples_per_option[o]) < min_share * static_cast<double>(total)) {
      continue;
    }
    ++qualifying;
    lo = std::min(lo, t.means[l][o]);
    hi = std::max(hi, t.means[l][o]);
  }
  return qualifying >= 2 ? hi - lo : 0.0;
}

// ---------------------------------------------------------------------------
// Latent export.

// One row per state: state_id, option, then the final hidden layer.
inline std::string ExportLatentsCsv(const AgentParams& params,
                                    const std::vector<std::vector<double>>& states,
                                    std::span<const std::size_t> options,
                                    std::span<const std::size_t> state_ids) {
  Require(!states.empty(), ErrorCode::kEmptySample, "no states to export");
  Require(options.size() == states.size() && state_ids.size() == states.size(),
          ErrorCode::kShapeMismatch, "states, options and ids must have equal length");
  std::ostringstream os;
  const std::size_t h = params.arch.latent_dim();
  os << "state_id,option";
  for (std::size_t j = 0; j < h; ++j) os << ",latent_" << j;
  os << '\n';
  for (std::size_t s = 0; s < states.size(); ++s) {
    const ForwardCache cache = Forward(params, states[s]);
    os << state_ids[s] << ',' << options[s];
    for (std::size_t j = 0; j < h; ++j) os << ',' << detail::Decimal17(cache.latent()(static_cast<Eigen::Index>(j), 0));
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Learning curve.

struct CurvePoint {
  std::size_t episode = 0;  // 1-based index of the last episode in the window
  double mean = 0.0;
  double std = 0.0;  // population std over the window
};

// Trailing moving average; the first window-1 points average the available
// prefix.
inline std::vector<CurvePoint> LearningCurve(std::span<const double> returns, std::size_t window = 200) {
  Require(!returns.empty(), ErrorCode::kEmptyLog, "no episode returns logged");
  Require(window >= 1, ErrorCode::kInvalidArgument, "window must be >= 1");
  std::vector<CurvePoint> curve;
  curve.reserve(returns.size());
  for (std::size_t i = 0; i < returns.size(); ++i) {
    const std::size_t begin = i + 1 >= window ? i + 1 - window : 0;
    const auto n = static_cast<double>(i + 1 - begin);
    double sum = 0.0;
    for (std::size_t j = begin; j <= i; ++j) sum += returns[j];
    const double mean = sum / n;
    double sq = 0.0;
    for (std::size_t j = begin; j <= i; ++j) sq += (returns[j] - mean) * (returns[j] - mean);
    curve.push_back({i + 1, mean, std::sqrt(sq / n)});
  }
  return curve;
}

inline std::string LearningCurveCsv(std::span<const CurvePoint> curve) {
  std::ostringstream os;
  os << "episode,mean,std\n";
  for (const auto& p : curve) os << p.episode << ',' << detail::Decimal17(p.mean) << ',' << detail::Decimal17(p.std) << '\n';
  return os.str();
}

}  // namespace optsep
