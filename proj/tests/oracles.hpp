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

// Independent oracles shared by the unit and acceptance suites. Nothing here
// calls into the code it checks, except where a function is explicitly a
// finite-difference probe of a scalar.

#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace optsep::testing {

inline double NormalPdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

// Adaptive Gauss-Kronrod over a window wide enough to hold all the mass of
// both densities, split at the means so each peak sits on a panel edge.
inline double IntegrateAroundNormals(const std::function<double(double)>& f, double m1, double s1,
                                     double m2, double s2) {
  const double lo = std::min(m1 - 40.0 * s1, m2 - 40.0 * s2);
  const double hi = std::max(m1 + 40.0 * s1, m2 + 40.0 * s2);
  double points[4] = {lo, std::min(m1, m2), std::max(m1, m2), hi};
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (points[i + 1] <= points[i]) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, points[i], points[i + 1], 15, 1e-12);
  }
  return total;
}

// KL(P||Q) = -int p log(q/p) dx for 1-D normals, by quadrature.
inline double QuadratureKl1d(double mp, double sp, double mq, double sq) {
  auto f = [&](double x) {
    const double p = NormalPdf(x, mp, sp);
    if (p == 0.0) return 0.0;
    // log p - log q in closed algebraic form avoids underflow in the tails
    const double lp = -0.5 * std::pow((x - mp) / sp, 2) - std::log(sp);
    const double lq = -0.5 * std::pow((x - mq) / sq, 2) - std::log(sq);
    return p * (lp - lq);
  };
  return IntegrateAroundNormals(f, mp, sp, mq, sq);
}

// H(P,Q) = sqrt(1 - int sqrt(p q) dx) for 1-D normals, by quadrature.
inline double QuadratureHellinger1d(double mp, double sp, double mq, double sq) {
  auto f = [&](double x) { return std::sqrt(NormalPdf(x, mp, sp) * NormalPdf(x, mq, sq)); };
  const double bc = IntegrateAroundNormals(f, mp, sp, mq, sq);
  return std::sqrt(std::clamp(1.0 - bc, 0.0, 1.0));
}

// Central differences of a scalar function of a parameter vector.
inline Eigen::VectorXd CentralDifference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double step = 1e-6) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe(i);
    probe(i) = orig + step;
    const double up = f(probe);
    probe(i) = orig - step;
    const double down = f(probe);
    probe(i) = orig;
    grad(i) = (up - down) / (2.0 * step);
  }
  return grad;
}

// Largest elementwise relative error |a - n| / max(|a|, |n|, floor). The
// floor keeps entries that are zero up to differencing noise from
// dominating; it is well below the magnitude of any gradient under test.
inline double MaxRelativeError(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                               double floor = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric(i)), floor});
    worst = std::max(worst, std::abs(analytic(i) - numeric(i)) / denom);
  }
  return worst;
}

}  // namespace optsep::testing
