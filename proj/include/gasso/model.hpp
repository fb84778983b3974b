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

// Two-block natural-parameter model
//
//   Theta_k = 1 mu_k^T + U0 V_k^T + U_k A_k^T,   k = 1, 2
//
// with a shared score matrix U0 and block-specific scores U_k. The
// identifiability conditions pinned by normalize():
//   * U0, U1, U2 column-centered; U0^T U1 = U0^T U2 = 0
//   * each score Gram matrix diagonal with nonincreasing diagonal
//   * V1^T V1 + V2^T V2 = I, A1^T A1 = I, A2^T A2 = I

#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gasso/common.hpp"
#include "gasso/expfam.hpp"
#include "gasso/numkit.hpp"

namespace gasso {

struct Ranks {
  Index r0 = 0;
  Index r1 = 0;
  Index r2 = 0;

  friend bool operator==(const Ranks&, const Ranks&) = default;
};

inline std::string to_string(const Ranks& r) {
  return std::to_string(r.r0) + "," + std::to_string(r.r1) + "," +
         std::to_string(r.r2);
}

/// Throws unless the ranks fit an n x p1 / n x p2 pair of blocks.
inline void validate_ranks(const Ranks& r, Index n, Index p1, Index p2) {
  if (r.r0 < 0 || r.r1 < 0 || r.r2 < 0) {
    throw std::invalid_argument("ranks must be nonnegative");
  }
  if (r.r0 > std::min({n, p1, p2}) || r.r1 > std::min(n, p1) ||
      r.r2 > std::min(n, p2)) {
    throw std::invalid_argument("ranks (" + to_string(r) +
                                ") exceed the block dimensions");
  }
  if (r.r0 + r.r1 + r.r2 > n - 1) {
    throw std::invalid_argument("r0 + r1 + r2 must be at most n - 1");
  }
}

struct DataBlock {
  Matrix X;
  std::vector<Family> family;  // one per column

  DataBlock() = default;
  DataBlock(Matrix x, std::vector<Family> fam) : X(std::move(x)), family(std::move(fam)) {
    if (static_cast<Index>(family.size()) != X.cols()) {
      throw std::invalid_argument("DataBlock: family vector length differs from column count");
    }
  }
  DataBlock(Matrix x, Family f)
      : X(std::move(x)), family(static_cast<std::size_t>(X.cols()), f) {}

  Index rows() const { return X.rows(); }
  Index cols() const { return X.cols(); }

  /// Throws naming the first entry outside its column's support.
  void validate() const {
    for (Index j = 0; j < X.cols(); ++j) {
      for (Index i = 0; i < X.rows(); ++i) {
        if (!expfam::in_support(family[static_cast<std::size_t>(j)], X(i, j))) {
          throw std::domain_error(
              "entry (" + std::to_string(i) + ", " + std::to_string(j) + ") = " +
              std::to_string(X(i, j)) + " outside the " +
              std::string(to_string(family[static_cast<std::size_t>(j)])) + " support");
        }
      }
    }
  }

  bool has(Family f) const {
    return std::find(family.begin(), family.end(), f) != family.end();
  }
};

/// Column-wise concatenation (X1, X2) with the family map carried along.
inline DataBlock concatenate(const DataBlock& a, const DataBlock& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concatenate: row counts differ");
  Matrix X(a.rows(), a.cols() + b.cols());
  X << a.X, b.X;
  std::vector<Family> fam = a.family;
  fam.insert(fam.end(), b.family.begin(), b.family.end());
  return DataBlock(std::move(X), std::move(fam));
}

struct GasParams {
  Vector mu1, mu2;
  Matrix U0, U1, U2;
  Matrix V1, V2;
  Matrix A1, A2;

  Index n() const { return U0.rows(); }
  Index p1() const { return mu1.size(); }
  Index p2() const { return mu2.size(); }
  Ranks ranks() const { return {U0.cols(), U1.cols(), U2.cols()}; }

  Matrix V0() const {
    Matrix v(V1.rows() + V2.rows(), V1.cols());
    v << V1, V2;
    return v;
  }

  static GasParams zeros(Index n, Index p1, Index p2, const Ranks& r) {
    GasParams g;
    g.mu1 = Vector::Zero(p1);
    g.mu2 = Vector::Zero(p2);
    g.U0 = Matrix::Zero(n, r.r0);
    g.U1 = Matrix::Zero(n, r.r1);
    g.U2 = Matrix::Zero(n, r.r2);
    g.V1 = Matrix::Zero(p1, r.r0);
    g.V2 = Matrix::Zero(p2, r.r0);
    g.A1 = Matrix::Zero(p1, r.r1);
    g.A2 = Matrix::Zero(p2, r.r2);
    return g;
  }

  void check_dimensions() const {
    const Index n = U0.rows();
    const bool ok = U1.rows() == n && U2.rows() == n && V1.rows() == p1() &&
                    V2.rows() == p2() && A1.rows() == p1() && A2.rows() == p2() &&
                    V1.cols() == U0.cols() && V2.cols() == U0.cols() &&
                    A1.cols() == U1.cols() && A2.cols() == U2.cols();
    if (!ok) throw std::invalid_argument("GasParams: inconsistent dimensions");
  }

  bool all_finite() const {
    return mu1.allFinite() && mu2.allFinite() && U0.allFinite() && U1.allFinite() &&
           U2.allFinite() && V1.allFinite() && V2.allFinite() && A1.allFinite() &&
           A2.allFinite();
  }
};

struct NaturalParameters {
  Matrix Theta1;
  Matrix Theta2;
};

inline NaturalParameters natural_parameters(const GasParams& g) {
  g.check_dimensions();
  NaturalParameters t;
  t.Theta1 = (g.U0 * g.V1.transpose() + g.U1 * g.A1.transpose()).rowwise() +
             g.mu1.transpose();
  t.Theta2 = (g.U0 * g.V2.transpose() + g.U2 * g.A2.transpose()).rowwise() +
             g.mu2.transpose();
  return t;
}

inline NaturalParameters natural_parameters(const GasParams& g, Index n) {
  if (g.n() != n) throw std::invalid_argument("natural_parameters: row count mismatch");
  return natural_parameters(g);
}

inline double block_log_likelihood(const DataBlock& d, const Matrix& Theta) {
  if (d.X.rows() != Theta.rows() || d.X.cols() != Theta.cols()) {
    throw std::invalid_argument("block_log_likelihood: dimension mismatch");
  }
  double total = 0.0;
  for (Index j = 0; j < d.X.cols(); ++j) {
    const Family f = d.family[static_cast<std::size_t>(j)];
    for (Index i = 0; i < d.X.rows(); ++i) {
      total += expfam::log_density(f, d.X(i, j), Theta(i, j));
    }
  }
  return total;
}

inline double joint_log_likelihood(const GasParams& g, const DataBlock& d1,
                                   const DataBlock& d2) {
  if (d1.rows() != d2.rows() || d1.rows() != g.n()) {
    throw std::invalid_argument("joint_log_likelihood: blocks are not row-aligned");
  }
  const auto t = natural_parameters(g);
  return block_log_likelihood(d1, t.Theta1) + block_log_likelihood(d2, t.Theta2);
}

/// Joint score/loading factors handed back by a joint-structure decomposer.
struct JointFactors {
  Matrix U0;  // n x r0, scores with singular values absorbed
  Matrix V0;  // (p1 + p2) x r0, orthonormal columns
};

/// Replacement for the dense SVD of the centered joint structure; receives
/// the centered (n x (p1 + p2)) joint matrix and r0.
using JointDecomposer = std::function<JointFactors(const Matrix& Jc, Index r0)>;

struct NormalizeOptions {
  /// Relative singular-value level below which a component counts as
  /// collapsed.
  double collapse_tol = 1e-10;
  JointDecomposer joint;  // empty: exact SVD
};

struct NormalizeResult {
  GasParams params;
  bool rank_collapsed = false;
  std::vector<std::string> notes;
};

namespace detail {

inline bool collapsed(const Vector& d, Index declared, double tol) {
  if (declared == 0) return false;
  const double top = d.size() ? d(0) : 0.0;
  for (Index k = 0; k < declared; ++k) {
    if (!(d(k) > tol * std::max(top, 1e-300)) || top == 0.0) return true;
  }
  return false;
}

// Collapsed components are kept with an exact zero singular value.
inline void zero_negligible(Vector& d, double tol) {
  if (d.size() == 0) return;
  const double cut = tol * d(0);
  for (Index k = 0; k < d.size(); ++k) {
    if (d(k) <= cut) d(k) = 0.0;
  }
}

}  // namespace detail

/// Maps a parameter set to the equivalent one satisfying the
/// identifiability conditions, preserving both natural-parameter matrices.
/// Individual structure is handled first, then the joint block.
inline NormalizeResult normalize(const GasParams& in, const NormalizeOptions& opt = {}) {
  in.check_dimensions();
  const Index n = in.n();
  const Index p1 = in.p1();
  const Index p2 = in.p2();
  const Ranks r = in.ranks();
  NormalizeResult res;
  GasParams& out = res.params;
  out = GasParams::zeros(n, p1, p2, r);

  // Individual scores: project onto the complement of (1, U0).
  Matrix base(n, 1 + r.r0);
  base << Vector::Ones(n), in.U0;
  const Matrix Q = numkit::orthonormal_basis(base);
  auto off_base = [&](const Matrix& U) {
    Matrix s = U - Q * (Q.transpose() * U);
    s -= Q * (Q.transpose() * s);
    return s;
  };
  const Matrix U1s = off_base(in.U1);
  const Matrix U2s = off_base(in.U2);

  auto individual = [&](const Matrix& Us, const Matrix& A, Matrix& Uo, Matrix& Ao,
                        const char* name) {
    if (A.cols() == 0) return;
    auto svd = numkit::lowrank_svd(Us, A, A.cols());
    detail::zero_negligible(svd.d, opt.collapse_tol);
    Uo = svd.U * svd.d.asDiagonal();
    Ao = svd.V;
    if (detail::collapsed(svd.d, A.cols(), opt.collapse_tol)) {
      res.rank_collapsed = true;
      res.notes.push_back(std::string(name) + " individual structure lost rank");
    }
  };
  individual(U1s, in.A1, out.U1, out.A1, "block-1");
  individual(U2s, in.A2, out.U2, out.A2, "block-2");

  // Joint block: old joint plus whatever the projection displaced, which
  // lies in span(1, U0). Factored as L R^T with L = (U0, U1 - U1s, U2 - U2s).
  const Index k = r.r0 + r.r1 + r.r2;
  Matrix L(n, k);
  L << in.U0, in.U1 - U1s, in.U2 - U2s;
  Matrix R = Matrix::Zero(p1 + p2, k);
  R.block(0, 0, p1, r.r0) = in.V1;
  R.block(p1, 0, p2, r.r0) = in.V2;
  R.block(0, r.r0, p1, r.r1) = in.A1;
  R.block(p1, r.r0 + r.r1, p2, r.r2) = in.A2;

  const Vector lbar = L.colwise().mean().transpose();
  const Vector mu_shift = R * lbar;
  out.mu1 = in.mu1 + mu_shift.head(p1);
  out.mu2 = in.mu2 + mu_shift.tail(p2);
  const Matrix Lc = L.rowwise() - lbar.transpose();

  if (r.r0 > 0) {
    Matrix U0, V0;
    if (opt.joint) {
      const Matrix Jc = Lc * R.transpose();
      auto jf = opt.joint(Jc, r.r0);
      U0 = std::move(jf.U0);
      V0 = std::move(jf.V0);
      const Vector norms = U0.colwise().norm().transpose();
      if (detail::collapsed(norms, r.r0, opt.collapse_tol)) {
        res.rank_collapsed = true;
        res.notes.push_back("joint structure lost rank");
      }
    } else {
      auto svd = numkit::lowrank_svd(Lc, R, r.r0);
      detail::zero_negligible(svd.d, opt.collapse_tol);
      U0 = svd.U * svd.d.asDiagonal();
      V0 = svd.V;
      if (detail::collapsed(svd.d, r.r0, opt.collapse_tol)) {
        res.rank_collapsed = true;
        res.notes.push_back("joint structure lost rank");
      }
    }
    out.U0 = U0;
    out.V1 = V0.topRows(p1);
    out.V2 = V0.bottomRows(p2);
  }
  return res;
}

struct ConditionCheck {
  std::string name;
  double violation = 0.0;
  bool pass = true;
};

struct IdentifiabilityReport {
  std::vector<ConditionCheck> checks;
  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const ConditionCheck& c) { return c.pass; });
  }
  double max_violation() const {
    double m = 0.0;
    for (const auto& c : checks) m = std::max(m, c.violation);
    return m;
  }
};

/// Per-condition violation magnitudes:
///   centering      max_j |1^T u_j| / sqrt(n)
///   orthogonality  max |cosine| between score columns
///   diagonality    max |cosine| between distinct columns of one score block
///   ordering       max positive increase of consecutive squared norms,
///                  relative to the first
///   loadings       max |G - I| entry
inline IdentifiabilityReport identifiability_report(const GasParams& g, double tol) {
  g.check_dimensions();
  IdentifiabilityReport rep;
  const double sqrt_n = std::sqrt(static_cast<double>(std::max<Index>(g.n(), 1)));
  auto add = [&](std::string name, double v) {
    rep.checks.push_back({std::move(name), v, v <= tol});
  };
  auto centering = [&](const Matrix& U) {
    return U.cols() ? (U.colwise().sum().cwiseAbs().maxCoeff() / sqrt_n) : 0.0;
  };
  auto max_cos = [](const Matrix& A, const Matrix& B, bool skip_diag) {
    double m = 0.0;
    for (Index a = 0; a < A.cols(); ++a) {
      for (Index b = 0; b < B.cols(); ++b) {
        if (skip_diag && a == b) continue;
        const double na = A.col(a).norm(), nb = B.col(b).norm();
        if (na == 0.0 || nb == 0.0) continue;
        m = std::max(m, std::abs(A.col(a).dot(B.col(b))) / (na * nb));
      }
    }
    return m;
  };
  auto ordering = [](const Matrix& U) {
    if (U.cols() < 2) return 0.0;
    const Vector s = U.colwise().squaredNorm().transpose();
    const double top = std::max(s(0), 1e-300);
    double m = 0.0;
    for (Index k = 0; k + 1 < s.size(); ++k) m = std::max(m, (s(k + 1) - s(k)) / top);
    return m;
  };
  auto orthonormal = [](const Matrix& G) {
    return G.size() ? (G - Matrix::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff() : 0.0;
  };
  add("U0 centered", centering(g.U0));
  add("U1 centered", centering(g.U1));
  add("U2 centered", centering(g.U2));
  add("U0 orthogonal to U1", max_cos(g.U0, g.U1, false));
  add("U0 orthogonal to U2", max_cos(g.U0, g.U2, false));
  add("U0 Gram diagonal", max_cos(g.U0, g.U0, true));
  add("U1 Gram diagonal", max_cos(g.U1, g.U1, true));
  add("U2 Gram diagonal", max_cos(g.U2, g.U2, true));
  add("U0 norms nonincreasing", ordering(g.U0));
  add("U1 norms nonincreasing", ordering(g.U1));
  add("U2 norms nonincreasing", ordering(g.U2));
  add("V1'V1 + V2'V2 = I",
      orthonormal(g.V1.transpose() * g.V1 + g.V2.transpose() * g.V2));
  add("A1'A1 = I", orthonormal(g.A1.transpose() * g.A1));
  add("A2'A2 = I", orthonormal(g.A2.transpose() * g.A2));
  return rep;
}

}  // namespace gasso
