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

// Alternating IRLS estimation of the two-block model. Every sub-update is a
// batch of independent GLM problems (one per row or per column) solved by
// glm_row_fit; a sweep visits
//   U1 -> (mu1, A1) -> U2 -> (mu2, A2) -> (mu1, V1) -> (mu2, V2) -> U0
// and then restores identifiability with normalize().

#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gasso/common.hpp"
#include "gasso/expfam.hpp"
#include "gasso/model.hpp"
#include "gasso/numkit.hpp"

namespace gasso {

enum class FitMode { Full, OneStep, OneStepSparse };

inline std::string_view to_string(FitMode m) {
  switch (m) {
    case FitMode::Full: return "full";
    case FitMode::OneStep: return "onestep";
    case FitMode::OneStepSparse: return "sparse";
  }
  return "unknown";
}

inline FitMode fit_mode_from_string(std::string_view s) {
  if (s == "full") return FitMode::Full;
  if (s == "onestep" || s == "one-step") return FitMode::OneStep;
  if (s == "sparse") return FitMode::OneStepSparse;
  throw std::invalid_argument("unknown fit mode '" + std::string(s) + "'");
}

enum class ThresholdRule { Asymptotic, QuantileFraction };

struct SparsityRule {
  ThresholdRule rule = ThresholdRule::Asymptotic;
  double fraction = 0.0;  // QuantileFraction only
};

struct FitConfig {
  FitMode mode = FitMode::Full;
  int max_iter = 0;  // 0: 1000 for Full, 2000 otherwise
  double tol = 1e-6;
  /// Unset: 1e-3 in Full mode, 0 in the one-step modes.
  std::optional<double> ridge_bernoulli;
  int inner_irls_max = 50;
  double inner_irls_tol = 1e-8;
  std::optional<SparsityRule> sparsity;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: GASSO_THREADS or 1

  int effective_max_iter() const {
    if (max_iter > 0) return max_iter;
    return mode == FitMode::Full ? 1000 : 2000;
  }

  double bernoulli_ridge() const {
    return ridge_bernoulli.value_or(mode == FitMode::Full ? 1e-3 : 0.0);
  }

  void validate() const {
    if (!(tol > 0.0)) throw std::invalid_argument("FitConfig: tol must be > 0");
    if (max_iter < 0) throw std::invalid_argument("FitConfig: max_iter must be >= 1");
    if (bernoulli_ridge() < 0.0) throw std::invalid_argument("FitConfig: negative ridge");
    if (inner_irls_max < 1) throw std::invalid_argument("FitConfig: inner_irls_max must be >= 1");
    if (sparsity && (sparsity->fraction < 0.0 || sparsity->fraction >= 1.0)) {
      throw std::invalid_argument("FitConfig: sparsity fraction must lie in [0, 1)");
    }
  }
};

struct FitResult {
  GasParams params;
  std::vector<double> loglik_trace;  // entry 0 is the initial value
  int iterations = 0;
  bool converged = false;
  double wall_time = 0.0;
  bool rank_collapsed = false;
  bool likelihood_decreased = false;  // one-step modes only
  long stalled_problems = 0;
  std::vector<std::string> notes;
};

// ---------------------------------------------------------------------------
// Single GLM problem

enum class GlmMode { FullIRLS, OneStep };

struct GlmOptions {
  int max_iter = 50;
  double tol = 1e-8;
  /// Optional 0/1 observation weights; zero entries are ignored.
  const Vector* mask = nullptr;
  /// With ridge > 0 the penalized optimum may lower the plain likelihood;
  /// when set, such a solution is rejected in favour of the warm start.
  bool monotone_guard = false;
};

struct GlmFit {
  Vector beta;
  bool stalled = false;
  int iterations = 0;
};

namespace detail {

inline double glm_loglik(const Vector& y, std::span<const Family> fam,
                         const Vector& theta, const Vector* mask) {
  double s = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    if (mask && (*mask)(i) == 0.0) continue;
    const Family f = fam[static_cast<std::size_t>(i)];
    const double t = expfam::detail::effective(f, theta(i));
    s += y(i) * t - expfam::cumulant(f, t);
  }
  return s;
}

}  // namespace detail

/// Maximizes sum_i l(y_i | offset_i + design_i beta) - (m/2) lambda |beta|^2.
/// FullIRLS iterates Newton steps with step halving; OneStep returns the
/// single weighted least-squares step taken from warm.
inline GlmFit glm_row_fit(const Vector& y, std::span<const Family> fam, const Matrix& design,
                          const Vector& offset, const Vector& warm, double lambda,
                          GlmMode mode, const GlmOptions& opt = {}) {
  const Index m = y.size();
  if (m < 1) throw std::invalid_argument("glm_row_fit: empty response");
  if (static_cast<Index>(fam.size()) != m || design.rows() != m || offset.size() != m ||
      warm.size() != design.cols() || (opt.mask && opt.mask->size() != m)) {
    throw std::invalid_argument("glm_row_fit: dimension mismatch");
  }
  GlmFit out;
  out.beta = warm;
  Vector w(m), z(m);

  // Builds the working response at beta; false when every weight vanished.
  auto working = [&](const Vector& beta) {
    const Vector eta = design * beta;
    bool any = false;
    for (Index i = 0; i < m; ++i) {
      const Family f = fam[static_cast<std::size_t>(i)];
      const double theta = offset(i) + eta(i);
      const double v = expfam::variance_from_natural(f, theta);
      const bool use = (!opt.mask || (*opt.mask)(i) != 0.0) && v >= kVarianceFloor;
      w(i) = use ? v : 0.0;
      z(i) = use ? eta(i) + (y(i) - expfam::mean_from_natural(f, theta)) / v : 0.0;
      any = any || use;
    }
    return any;
  };
  const double pen = 0.5 * static_cast<double>(m) * lambda;
  auto objective = [&](const Vector& beta) {
    const Vector theta = offset + design * beta;
    return detail::glm_loglik(y, fam, theta, opt.mask) - pen * beta.squaredNorm();
  };

  if (mode == GlmMode::OneStep) {
    if (!working(warm)) {
      out.stalled = true;
      return out;
    }
    out.beta = numkit::weighted_ridge_ls(design, z, w, lambda);
    out.iterations = 1;
    return out;
  }

  double obj = objective(out.beta);
  for (int it = 0; it < opt.max_iter; ++it) {
    if (!working(out.beta)) {
      out.stalled = true;
      out.beta = warm;
      return out;
    }
    const Vector step = numkit::weighted_ridge_ls(design, z, w, lambda) - out.beta;
    out.iterations = it + 1;
    if (step.norm() <= 1e-12 * (1.0 + out.beta.norm())) break;
    double t = 1.0;
    bool accepted = false;
    double next = obj;
    Vector cand;
    for (int h = 0; h < 30; ++h, t *= 0.5) {
      cand = out.beta + t * step;
      next = objective(cand);
      if (next >= obj) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    out.beta = cand;
    const double gain = next - obj;
    obj = next;
    if (gain <= opt.tol * (1.0 + std::abs(obj))) break;
  }
  if (opt.monotone_guard && lambda > 0.0) {
    const double before = detail::glm_loglik(y, fam, offset + design * warm, opt.mask);
    const double after = detail::glm_loglik(y, fam, offset + design * out.beta, opt.mask);
    if (after < before) out.beta = warm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sparse joint SVD

struct SparseJointSvd {
  Matrix U0;  // n x r0, scores (J V)
  Matrix V1;
  Matrix V2;
  int iterations = 0;
};

namespace detail {

inline double quantile_abs(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  for (auto& x : v) x = std::abs(x);
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Gram-Schmidt in order of increasing support size: the sparsest column
// is only rescaled, so its zero pattern survives orthonormalization.
inline Matrix orthonormalize_by_support(const Matrix& L) {
  const Index r = L.cols();
  std::vector<Index> order(static_cast<std::size_t>(r));
  for (Index k = 0; k < r; ++k) order[static_cast<std::size_t>(k)] = k;
  std::vector<Index> nnz(static_cast<std::size_t>(r));
  for (Index k = 0; k < r; ++k) {
    nnz[static_cast<std::size_t>(k)] = (L.col(k).array() != 0.0).count();
  }
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return nnz[static_cast<std::size_t>(a)] < nnz[static_cast<std::size_t>(b)];
  });
  Matrix Q = Matrix::Zero(L.rows(), r);
  std::vector<Index> done;
  for (Index k : order) {
    Vector v = L.col(k);
    for (int pass = 0; pass < 2; ++pass) {
      for (Index j : done) v -= Q.col(j).dot(v) * Q.col(j);
    }
    const double nv = v.norm();
    if (!(nv > 1e-12 * std::max(1.0, L.col(k).norm()))) {
      throw std::runtime_error("sparse_joint_svd: thresholding annihilated joint component " +
                               std::to_string(k + 1));
    }
    Q.col(k) = v / nv;
    done.push_back(k);
  }
  return Q;
}

}  // namespace detail

/// Alternating thresholded SVD of a column-centered joint matrix J with
/// rows 0..p1-1 of the loadings belonging to block 1. Thresholds apply to
/// each block separately. The returned loadings satisfy
/// V1'V1 + V2'V2 = I; the score Gram is not rotated to diagonal form since
/// that rotation would mix the supports of the loading columns.
inline SparseJointSvd sparse_joint_svd(const Matrix& J, Index r0, const SparsityRule& rule,
                                       Index p1, int max_iter = 500) {
  const Index p = J.cols();
  if (p1 < 0 || p1 > p) throw std::invalid_argument("sparse_joint_svd: bad block split");
  SparseJointSvd out;
  if (r0 == 0) {
    out.U0 = Matrix::Zero(J.rows(), 0);
    out.V1 = Matrix::Zero(p1, 0);
    out.V2 = Matrix::Zero(p - p1, 0);
    return out;
  }
  const auto start = numkit::thin_svd(J, r0);
  const Index blocks[2][2] = {{0, p1}, {p1, p - p1}};

  double thresh[2] = {0.0, 0.0};
  if (rule.rule == ThresholdRule::Asymptotic) {
    const Matrix E = J - start.U * start.d.asDiagonal() * start.V.transpose();
    for (int b = 0; b < 2; ++b) {
      const Index len = blocks[b][1];
      if (len == 0) continue;
      const Matrix Eb = E.middleCols(blocks[b][0], len);
      std::vector<double> vals(Eb.data(), Eb.data() + Eb.size());
      const double sigma = 1.4826 * mad(vals);
      thresh[b] = sigma * std::sqrt(2.0 * std::log(std::max<double>(2.0, static_cast<double>(len))));
    }
  }

  auto threshold = [&](Matrix& L) {
    // Rounding-level entries count as exact zeros under every rule.
    for (Index k = 0; k < L.cols(); ++k) {
      const double floor = 1e-12 * L.col(k).cwiseAbs().maxCoeff();
      for (Index j = 0; j < L.rows(); ++j) {
        if (std::abs(L(j, k)) <= floor) L(j, k) = 0.0;
      }
    }
    for (int b = 0; b < 2; ++b) {
      const Index off = blocks[b][0], len = blocks[b][1];
      if (len == 0) continue;
      for (Index k = 0; k < L.cols(); ++k) {
        auto col = L.col(k).segment(off, len);
        double cut = thresh[b];
        if (rule.rule == ThresholdRule::QuantileFraction) {
          if (rule.fraction <= 0.0) continue;
          std::vector<double> v(col.data(), col.data() + len);
          cut = detail::quantile_abs(std::move(v), rule.fraction);
          for (Index j = 0; j < len; ++j) {
            if (std::abs(col(j)) <= cut) col(j) = 0.0;
          }
        } else {
          for (Index j = 0; j < len; ++j) {
            if (std::abs(col(j)) < cut) col(j) = 0.0;
          }
        }
      }
    }
  };

  const bool passthrough =
      rule.rule == ThresholdRule::QuantileFraction && rule.fraction <= 0.0;
  Matrix V = start.V;
  if (!passthrough) {
    Matrix U = start.U;
    for (int it = 0; it < max_iter; ++it) {
      Matrix L = J.transpose() * U;
      threshold(L);
      const Matrix Vn = detail::orthonormalize_by_support(L);
      const Matrix S = J * Vn;
      U = numkit::orthonormal_basis(S);
      if (U.cols() < r0) {
        throw std::runtime_error("sparse_joint_svd: joint scores lost rank");
      }
      const double change = (Vn - V * (V.transpose() * Vn)).norm();
      V = Vn;
      out.iterations = it + 1;
      if (change < 1e-6) break;
    }
  }
  Matrix U0 = J * V;
  // Order components by score norm.
  std::vector<Index> order(static_cast<std::size_t>(r0));
  for (Index k = 0; k < r0; ++k) order[static_cast<std::size_t>(k)] = k;
  const Vector norms = U0.colwise().norm().transpose();
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return norms(a) > norms(b); });
  Matrix Us(J.rows(), r0), Vs(p, r0);
  for (Index k = 0; k < r0; ++k) {
    Us.col(k) = U0.col(order[static_cast<std::size_t>(k)]);
    Vs.col(k) = V.col(order[static_cast<std::size_t>(k)]);
  }
  if (passthrough) {
    Us = start.U * start.d.asDiagonal();
    Vs = start.V;
  }
  numkit::apply_sign_convention(Us, Vs);
  out.U0 = std::move(Us);
  out.V1 = Vs.topRows(p1);
  out.V2 = Vs.bottomRows(p - p1);
  return out;
}

inline JointDecomposer sparse_decomposer(const SparsityRule& rule, Index p1) {
  return [rule, p1](const Matrix& Jc, Index r0) {
    auto s = sparse_joint_svd(Jc, r0, rule, p1);
    JointFactors f;
    f.U0 = std::move(s.U0);
    f.V0.resize(s.V1.rows() + s.V2.rows(), r0);
    f.V0 << s.V1, s.V2;
    return f;
  };
}

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

inline double marginal_natural(Family f, const Eigen::Ref<const Vector>& x) {
  const double n = static_cast<double>(x.size());
  double m = x.mean();
  const double eps = 1.0 / (2.0 * n);
  if (f == Family::Bernoulli) m = std::clamp(m, eps, 1.0 - eps);
  if (f == Family::Poisson) m = std::max(m, eps);
  return expfam::link(f, m);
}

inline double surrogate(Family f, double x) {
  switch (f) {
    case Family::GaussianUnitVar: return x;
    case Family::Bernoulli: return expfam::link(f, std::clamp(x, 0.25, 0.75));
    case Family::Poisson: return std::log(std::max(x, 0.5));
  }
  return x;
}

inline Matrix surrogate_matrix(const DataBlock& d) {
  Matrix Z(d.rows(), d.cols());
  for (Index j = 0; j < d.cols(); ++j) {
    const Family f = d.family[static_cast<std::size_t>(j)];
    for (Index i = 0; i < d.rows(); ++i) Z(i, j) = surrogate(f, d.X(i, j));
  }
  return Z;
}

}  // namespace detail

/// Marginal intercepts plus an SVD start computed from link-transformed,
/// clipped data: joint part from the concatenated centered surrogate,
/// individual parts from each block's remainder.
inline GasParams initialize(const DataBlock& d1, const DataBlock& d2, const Ranks& ranks) {
  if (d1.rows() != d2.rows()) throw std::invalid_argument("initialize: blocks are not row-aligned");
  const Index n = d1.rows(), p1 = d1.cols(), p2 = d2.cols();
  validate_ranks(ranks, n, p1, p2);
  GasParams g = GasParams::zeros(n, p1, p2, ranks);
  for (Index j = 0; j < p1; ++j) {
    g.mu1(j) = detail::marginal_natural(d1.family[static_cast<std::size_t>(j)], d1.X.col(j));
  }
  for (Index j = 0; j < p2; ++j) {
    g.mu2(j) = detail::marginal_natural(d2.family[static_cast<std::size_t>(j)], d2.X.col(j));
  }
  const Matrix Z1 = numkit::center_columns(detail::surrogate_matrix(d1)).Mc;
  const Matrix Z2 = numkit::center_columns(detail::surrogate_matrix(d2)).Mc;
  Matrix Z(n, p1 + p2);
  Z << Z1, Z2;
  const auto j = numkit::thin_svd(Z, ranks.r0);
  g.U0 = j.U * j.d.asDiagonal();
  g.V1 = j.V.topRows(p1);
  g.V2 = j.V.bottomRows(p2);
  const Matrix R1 = Z1 - g.U0 * g.V1.transpose();
  const Matrix R2 = Z2 - g.U0 * g.V2.transpose();
  const auto s1 = numkit::thin_svd(R1, ranks.r1);
  const auto s2 = numkit::thin_svd(R2, ranks.r2);
  g.U1 = s1.U * s1.d.asDiagonal();
  g.A1 = s1.V;
  g.U2 = s2.U * s2.d.asDiagonal();
  g.A2 = s2.V;
  return normalize(g).params;
}

// ---------------------------------------------------------------------------
// Alternating fit

namespace detail {

struct SweepContext {
  const FitConfig& cfg;
  GlmMode glm_mode;
  int threads;
  long stalled = 0;
};

inline double ridge_for(const FitConfig& cfg, std::span<const Family> fam) {
  const bool bern = std::find(fam.begin(), fam.end(), Family::Bernoulli) != fam.end();
  return bern ? cfg.bernoulli_ridge() : 0.0;
}

// Row i: response X.row(i), design D, offset O.row(i); writes S.row(i).
inline void fit_rows(SweepContext& ctx, const Matrix& X, std::span<const Family> fam,
                     const Matrix& D, const Matrix& O, Matrix& S) {
  if (S.cols() == 0) return;
  const double lambda = ridge_for(ctx.cfg, fam);
  GlmOptions opt;
  opt.max_iter = ctx.cfg.inner_irls_max;
  opt.tol = ctx.cfg.inner_irls_tol;
  opt.monotone_guard = ctx.glm_mode == GlmMode::FullIRLS;
  std::vector<char> stalled(static_cast<std::size_t>(X.rows()), 0);
  const Matrix Sw = S;
  parallel_for(X.rows(), ctx.threads, [&](Index i) {
    const Vector y = X.row(i).transpose();
    const Vector off = O.row(i).transpose();
    const Vector warm = Sw.row(i).transpose();
    auto r = glm_row_fit(y, fam, D, off, warm, lambda, ctx.glm_mode, opt);
    S.row(i) = r.beta.transpose();
    stalled[static_cast<std::size_t>(i)] = r.stalled;
  });
  for (char s : stalled) ctx.stalled += s;
}

// Column j: response X.col(j) (single family), design D, offset O.col(j);
// writes C.row(j).
inline void fit_cols(SweepContext& ctx, const DataBlock& d, const Matrix& D, const Matrix& O,
                     Matrix& C) {
  GlmOptions opt;
  opt.max_iter = ctx.cfg.inner_irls_max;
  opt.tol = ctx.cfg.inner_irls_tol;
  opt.monotone_guard = ctx.glm_mode == GlmMode::FullIRLS;
  const Index n = d.rows();
  std::vector<char> stalled(static_cast<std::size_t>(d.cols()), 0);
  const Matrix Cw = C;
  parallel_for(d.cols(), ctx.threads, [&](Index j) {
    const Family f = d.family[static_cast<std::size_t>(j)];
    const std::vector<Family> fam(static_cast<std::size_t>(n), f);
    const double lambda = f == Family::Bernoulli ? ctx.cfg.bernoulli_ridge() : 0.0;
    const Vector y = d.X.col(j);
    const Vector off = O.col(j);
    const Vector warm = Cw.row(j).transpose();
    auto r = glm_row_fit(y, fam, D, off, warm, lambda, ctx.glm_mode, opt);
    C.row(j) = r.beta.transpose();
    stalled[static_cast<std::size_t>(j)] = r.stalled;
  });
  for (char s : stalled) ctx.stalled += s;
}

inline Matrix with_ones(const Matrix& U) {
  Matrix D(U.rows(), 1 + U.cols());
  D << Vector::Ones(U.rows()), U;
  return D;
}

inline Matrix intercept_plus(const Vector& mu, Index n) {
  return Vector::Ones(n) * mu.transpose();
}

}  // namespace detail

/// Runs the alternating algorithm from a given starting point.
inline FitResult fit_from(const DataBlock& d1, const DataBlock& d2, GasParams start,
                          const FitConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (d1.rows() != d2.rows()) throw std::invalid_argument("fit: blocks are not row-aligned");
  d1.validate();
  d2.validate();
  const Index n = d1.rows(), p1 = d1.cols(), p2 = d2.cols();
  start.check_dimensions();
  if (start.n() != n || start.p1() != p1 || start.p2() != p2) {
    throw std::invalid_argument("fit: starting parameters do not match the data");
  }
  validate_ranks(start.ranks(), n, p1, p2);

  detail::SweepContext ctx{cfg, cfg.mode == FitMode::Full ? GlmMode::FullIRLS : GlmMode::OneStep,
                           resolve_threads(cfg.threads)};
  NormalizeOptions nopt;
  if (cfg.mode == FitMode::OneStepSparse) {
    nopt.joint = sparse_decomposer(cfg.sparsity.value_or(SparsityRule{}), p1);
  }

  Matrix Xc(n, p1 + p2);
  Xc << d1.X, d2.X;
  std::vector<Family> fam_cat = d1.family;
  fam_cat.insert(fam_cat.end(), d2.family.begin(), d2.family.end());

  FitResult res;
  GasParams& g = start;
  double ll = joint_log_likelihood(g, d1, d2);
  if (!std::isfinite(ll)) throw std::runtime_error("fit: initial log-likelihood is not finite");
  res.loglik_trace.push_back(ll);

  auto check = [&](const Matrix& M, const char* what, int sweep) {
    if (!M.allFinite()) {
      throw std::runtime_error(std::string("fit: non-finite estimates after the ") + what +
                               " update in sweep " + std::to_string(sweep));
    }
  };
  auto guarded = [&](const char* what, int sweep, auto&& body) {
    try {
      body();
    } catch (const std::domain_error& e) {
      throw std::runtime_error(std::string("fit: ") + what + " update failed in sweep " +
                               std::to_string(sweep) + ": " + e.what());
    }
  };

  const int max_iter = cfg.effective_max_iter();
  for (int sweep = 1; sweep <= max_iter; ++sweep) {
    // U1
    guarded("U1", sweep, [&] {
      const Matrix O = detail::intercept_plus(g.mu1, n) + g.U0 * g.V1.transpose();
      detail::fit_rows(ctx, d1.X, d1.family, g.A1, O, g.U1);
    });
    check(g.U1, "U1", sweep);
    // (mu1, A1)
    guarded("(mu1, A1)", sweep, [&] {
      Matrix C(p1, 1 + g.A1.cols());
      C << g.mu1, g.A1;
      detail::fit_cols(ctx, d1, detail::with_ones(g.U1), g.U0 * g.V1.transpose(), C);
      g.mu1 = C.col(0);
      g.A1 = C.rightCols(g.A1.cols());
    });
    check(g.A1, "(mu1, A1)", sweep);
    check(g.mu1, "(mu1, A1)", sweep);
    // U2
    guarded("U2", sweep, [&] {
      const Matrix O = detail::intercept_plus(g.mu2, n) + g.U0 * g.V2.transpose();
      detail::fit_rows(ctx, d2.X, d2.family, g.A2, O, g.U2);
    });
    check(g.U2, "U2", sweep);
    // (mu2, A2)
    guarded("(mu2, A2)", sweep, [&] {
      Matrix C(p2, 1 + g.A2.cols());
      C << g.mu2, g.A2;
      detail::fit_cols(ctx, d2, detail::with_ones(g.U2), g.U0 * g.V2.transpose(), C);
      g.mu2 = C.col(0);
      g.A2 = C.rightCols(g.A2.cols());
    });
    check(g.A2, "(mu2, A2)", sweep);
    check(g.mu2, "(mu2, A2)", sweep);
    // (mu1, V1)
    guarded("(mu1, V1)", sweep, [&] {
      Matrix C(p1, 1 + g.V1.cols());
      C << g.mu1, g.V1;
      detail::fit_cols(ctx, d1, detail::with_ones(g.U0), g.U1 * g.A1.transpose(), C);
      g.mu1 = C.col(0);
      g.V1 = C.rightCols(g.V1.cols());
    });
    check(g.V1, "(mu1, V1)", sweep);
    check(g.mu1, "(mu1, V1)", sweep);
    // (mu2, V2)
    guarded("(mu2, V2)", sweep, [&] {
      Matrix C(p2, 1 + g.V2.cols());
      C << g.mu2, g.V2;
      detail::fit_cols(ctx, d2, detail::with_ones(g.U0), g.U2 * g.A2.transpose(), C);
      g.mu2 = C.col(0);
      g.V2 = C.rightCols(g.V2.cols());
    });
    check(g.V2, "(mu2, V2)", sweep);
    check(g.mu2, "(mu2, V2)", sweep);
    // U0
    guarded("U0", sweep, [&] {
      Matrix O(n, p1 + p2);
      O << detail::intercept_plus(g.mu1, n) + g.U1 * g.A1.transpose(),
          detail::intercept_plus(g.mu2, n) + g.U2 * g.A2.transpose();
      detail::fit_rows(ctx, Xc, fam_cat, g.V0(), O, g.U0);
    });
    check(g.U0, "U0", sweep);

    auto nr = normalize(g, nopt);
    g = std::move(nr.params);
    if (nr.rank_collapsed && !res.rank_collapsed) {
      res.rank_collapsed = true;
      for (auto& s : nr.notes) res.notes.push_back("sweep " + std::to_string(sweep) + ": " + s);
    }

    const double prev = ll;
    ll = joint_log_likelihood(g, d1, d2);
    if (!std::isfinite(ll)) {
      throw std::runtime_error("fit: log-likelihood not finite after sweep " +
                               std::to_string(sweep));
    }
    res.loglik_trace.push_back(ll);
    res.iterations = sweep;
    if (cfg.mode != FitMode::Full && ll < prev - 1e-6 * (1.0 + std::abs(prev))) {
      if (!res.likelihood_decreased) {
        res.notes.push_back("log-likelihood decreased in sweep " + std::to_string(sweep));
      }
      res.likelihood_decreased = true;
    }
    if (std::abs(ll - prev) / (1.0 + std::abs(ll)) < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.params = std::move(g);
  res.stalled_problems = ctx.stalled;
  res.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline FitResult fit(const DataBlock& d1, const DataBlock& d2, const Ranks& ranks,
                     const FitConfig& cfg) {
  d1.validate();
  d2.validate();
  return fit_from(d1, d2, initialize(d1, d2, ranks), cfg);
}

}  // namespace gasso
