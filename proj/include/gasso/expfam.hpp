// Copyright 2026 The gasso Authors. All Rights Reserved.
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

// Single-parameter exponential families with density
//   f(x | theta) = h(x) exp{x theta - b(theta)}.
// Gaussian has unit variance; Bernoulli and Poisson use canonical links.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gasso {

enum class Family { GaussianUnitVar, Bernoulli, Poisson };

/// Natural parameters are clamped to this range before exp/logistic.
inline constexpr double kThetaClip = 30.0;
/// Lower bound on b''(theta) wherever it is used as a divisor.
inline constexpr double kVarianceFloor = 1e-10;

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::GaussianUnitVar: return "gaussian";
    case Family::Bernoulli: return "bernoulli";
    case Family::Poisson: return "poisson";
  }
  return "unknown";
}

inline Family family_from_string(std::string_view s) {
  if (s == "gaussian" || s == "normal" || s == "g") return Family::GaussianUnitVar;
  if (s == "bernoulli" || s == "binary" || s == "b") return Family::Bernoulli;
  if (s == "poisson" || s == "count" || s == "p") return Family::Poisson;
  throw std::invalid_argument("unknown family '" + std::string(s) + "'");
}

namespace expfam {

namespace detail {

inline void require_finite(double theta) {
  if (!std::isfinite(theta)) {
    throw std::domain_error("natural parameter is not finite");
  }
}

inline double clip(double theta) {
  return std::clamp(theta, -kThetaClip, kThetaClip);
}

// theta as seen by the family: clipped for the exp/logistic families.
inline double effective(Family f, double theta) {
  require_finite(theta);
  return f == Family::GaussianUnitVar ? theta : clip(theta);
}

inline double logistic(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

inline double cumulant(Family f, double theta) {
  const double t = detail::effective(f, theta);
  switch (f) {
    case Family::GaussianUnitVar: return 0.5 * t * t;
    case Family::Poisson: return std::exp(t);
    case Family::Bernoulli: return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
  }
  return 0.0;
}

inline double mean_from_natural(Family f, double theta) {
  const double t = detail::effective(f, theta);
  switch (f) {
    case Family::GaussianUnitVar: return t;
    case Family::Poisson: return std::exp(t);
    case Family::Bernoulli: return detail::logistic(t);
  }
  return 0.0;
}

inline double variance_from_natural(Family f, double theta) {
  const double t = detail::effective(f, theta);
  switch (f) {
    case Family::GaussianUnitVar: return 1.0;
    case Family::Poisson: return std::exp(t);
    case Family::Bernoulli: {
      const double p = detail::logistic(t);
      return p * (1.0 - p);
    }
  }
  return 0.0;
}

inline bool in_support(Family f, double x) {
  if (!std::isfinite(x)) return false;
  switch (f) {
    case Family::GaussianUnitVar: return true;
    case Family::Bernoulli: return x == 0.0 || x == 1.0;
    case Family::Poisson: return x >= 0.0 && x == std::floor(x);
  }
  return false;
}

/// log f(x | theta), including the base measure h(x).
inline double log_density(Family f, double x, double theta) {
  if (!in_support(f, x)) {
    throw std::domain_error("observation " + std::to_string(x) +
                            " outside the support of the " +
                            std::string(to_string(f)) + " family");
  }
  const double t = detail::effective(f, theta);
  double log_h = 0.0;
  switch (f) {
    case Family::GaussianUnitVar:
      log_h = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
      break;
    case Family::Poisson: log_h = -std::lgamma(x + 1.0); break;
    case Family::Bernoulli: break;
  }
  return x * t - cumulant(f, t) + log_h;
}

struct PearsonResidual {
  double value = 0.0;
  bool floored = false;  // variance fell below kVarianceFloor
};

inline PearsonResidual pearson_residual(Family f, double x, double theta) {
  const double var = variance_from_natural(f, theta);
  PearsonResidual r;
  r.floored = var < kVarianceFloor;
  r.value = (x - mean_from_natural(f, theta)) /
            std::sqrt(r.floored ? kVarianceFloor : var);
  return r;
}

/// Canonical link g = (b')^{-1}; mu must lie in the open mean domain.
inline double link(Family f, double mu) {
  switch (f) {
    case Family::GaussianUnitVar:
      if (!std::isfinite(mu)) break;
      return mu;
    case Family::Poisson:
      if (!(mu > 0.0) || !std::isfinite(mu)) break;
      return std::log(mu);
    case Family::Bernoulli:
      if (!(mu > 0.0 && mu < 1.0)) break;
      return std::log(mu) - std::log1p(-mu);
  }
  throw std::domain_error("mean " + std::to_string(mu) +
                          " outside the open mean domain of the " +
                          std::string(to_string(f)) + " family");
}

}  // namespace expfam
}  // namespace gasso
