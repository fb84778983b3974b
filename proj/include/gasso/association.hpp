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

// Association coefficient between two column-centered natural-parameter
// matrices,
//   rho = ||T1' T2||_* / (||T1||_F ||T2||_F),
// and its row-permutation null distribution.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gasso/common.hpp"
#include "gasso/numkit.hpp"

namespace gasso {

namespace detail {

// Column-space factor F with F F' = T T' (so ||T1' P T2||_* equals
// ||F1' P F2||_* for any row permutation P), of width rank(T).
inline Matrix gram_factor(const Matrix& T) {
  if (T.cols() == 0 || T.rows() == 0) return Matrix::Zero(T.rows(), 0);
  Eigen::BDCSVD<Matrix> svd(T, Eigen::ComputeThinU);
  const Vector& d = svd.singularValues();
  Index k = 0;
  while (k < d.size() && d(k) > 1e-12 * d(0)) ++k;
  return svd.matrixU().leftCols(k) * d.head(k).asDiagonal();
}

inline void require_nonzero(const Matrix& T, const char* which) {
  if (!(T.norm() > 0.0) || !T.allFinite()) {
    throw std::domain_error(std::string("association coefficient undefined: ") + which +
                            " has zero (or non-finite) norm after centering");
  }
}

}  // namespace detail

/// Inputs are re-centered internally.
inline double association_coefficient(const Matrix& Theta1c, const Matrix& Theta2c) {
  if (Theta1c.rows() != Theta2c.rows()) {
    throw std::invalid_argument("association_coefficient: row counts differ");
  }
  const Matrix T1 = numkit::center_columns(Theta1c).Mc;
  const Matrix T2 = numkit::center_columns(Theta2c).Mc;
  detail::require_nonzero(T1, "first matrix");
  detail::require_nonzero(T2, "second matrix");
  const double rho = numkit::nuclear_norm(T1.transpose() * T2) / (T1.norm() * T2.norm());
  return std::clamp(rho, 0.0, 1.0);
}

struct PermTestResult {
  double rho0 = 0.0;
  std::vector<double> null_samples;
  double p_value = 1.0;        // (1 + #{null >= rho0}) / (B + 1)
  double p_value_plain = 1.0;  // #{null >= rho0} / B
  std::uint64_t seed = 0;
  Index permutations = 0;
};

/// Uniform random permutation of 0..n-1 by Fisher-Yates.
inline std::vector<Index> random_permutation(Index n, std::mt19937_64& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
  }
  return perm;
}

/// Keeps the first matrix fixed and permutes the rows of the second; each
/// permutation draws from its own (seed, index) stream.
inline PermTestResult permutation_test(const Matrix& Theta1c, const Matrix& Theta2c, Index B,
                                       std::uint64_t seed, int threads = 0) {
  if (B < 1) throw std::invalid_argument("permutation_test: B must be >= 1");
  if (Theta1c.rows() != Theta2c.rows()) {
    throw std::invalid_argument("permutation_test: row counts differ");
  }
  const Matrix T1 = numkit::center_columns(Theta1c).Mc;
  const Matrix T2 = numkit::center_columns(Theta2c).Mc;
  detail::require_nonzero(T1, "first matrix");
  detail::require_nonzero(T2, "second matrix");
  const Matrix F1 = detail::gram_factor(T1);
  const Matrix F2 = detail::gram_factor(T2);
  const double denom = T1.norm() * T2.norm();
  const Index n = T1.rows();

  PermTestResult out;
  out.seed = seed;
  out.permutations = B;
  out.rho0 = std::clamp(numkit::nuclear_norm(F1.transpose() * F2) / denom, 0.0, 1.0);
  out.null_samples.assign(static_cast<std::size_t>(B), 0.0);
  parallel_for(B, resolve_threads(threads), [&](Index b) {
    auto rng = stream_rng(seed, static_cast<std::uint64_t>(b), 0x5045524dULL);
    const auto perm = random_permutation(n, rng);
    Matrix PF2(n, F2.cols());
    for (Index i = 0; i < n; ++i) PF2.row(i) = F2.row(perm[static_cast<std::size_t>(i)]);
    out.null_samples[static_cast<std::size_t>(b)] =
        std::clamp(numkit::nuclear_norm(F1.transpose() * PF2) / denom, 0.0, 1.0);
  });
  // Relative slack so that exact ties survive rounding.
  const double bar = out.rho0 * (1.0 - 1e-12);
  Index exceed = 0;
  for (double v : out.null_samples) exceed += v >= bar;
  out.p_value = static_cast<double>(1 + exceed) / static_cast<double>(B + 1);
  out.p_value_plain = static_cast<double>(exceed) / static_cast<double>(B);
  return out;
}

}  // namespace gasso
