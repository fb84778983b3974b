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

// Rank selection. Each block's centered natural-parameter rank is chosen by
// entrywise N-fold cross-validation of a low-rank exponential-family fit;
// the concatenated block gives the rank of the stacked structure, and the
// three numbers determine (r0, r1, r2).

#pragma once

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gasso/common.hpp"
#include "gasso/expfam.hpp"
#include "gasso/fitter.hpp"
#include "gasso/model.hpp"
#include "gasso/numkit.hpp"

namespace gasso {

struct CvPlan {
  Index folds = 0;
  std::vector<Matrix> masks;  // masks[l](i, j) = 1 when entry (i, j) is held out in fold l
  std::uint64_t seed = 0;
  bool repaired = false;
};

namespace detail {

// True when no row and no column of the retained data is entirely missing.
inline bool fold_ok(const Matrix& heldout) {
  const Index n = heldout.rows(), p = heldout.cols();
  for (Index i = 0; i < n; ++i) {
    if (heldout.row(i).sum() >= static_cast<double>(p)) return false;
  }
  for (Index j = 0; j < p; ++j) {
    if (heldout.col(j).sum() >= static_cast<double>(n)) return false;
  }
  return true;
}

inline std::vector<Matrix> masks_from_labels(const std::vector<Index>& label, Index n, Index p,
                                             Index folds) {
  std::vector<Matrix> masks(static_cast<std::size_t>(folds), Matrix::Zero(n, p));
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < n; ++i) {
      masks[static_cast<std::size_t>(label[static_cast<std::size_t>(i + j * n)])](i, j) = 1.0;
    }
  }
  return masks;
}

}  // namespace detail

/// Balanced random assignment of entries to folds; re-drawn (bounded) when
/// a fold would hide a full row or column, then repaired entry by entry.
inline CvPlan make_cv_plan(Index n, Index p, Index folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("make_cv_plan: need at least 2 folds");
  if (n < 1 || p < 1) throw std::invalid_argument("make_cv_plan: empty matrix");
  if (folds > n * p) throw std::invalid_argument("make_cv_plan: more folds than entries");
  if (n < 2 || p < 2) {
    throw std::runtime_error(
        "make_cv_plan: a single row or column cannot keep every fold's rows and columns observed");
  }
  const Index total = n * p;
  CvPlan plan;
  plan.folds = folds;
  plan.seed = seed;
  std::vector<Index> label(static_cast<std::size_t>(total));
  for (int attempt = 0; attempt < 50; ++attempt) {
    auto rng = stream_rng(seed, static_cast<std::uint64_t>(attempt), 0x4356504cULL);
    for (Index k = 0; k < total; ++k) label[static_cast<std::size_t>(k)] = k % folds;
    std::shuffle(label.begin(), label.end(), rng);
    plan.masks = detail::masks_from_labels(label, n, p, folds);
    bool ok = true;
    for (const auto& m : plan.masks) ok = ok && detail::fold_ok(m);
    if (ok) return plan;
  }
  // Repair: move one entry out of every fully held-out row / column.
  for (int sweep = 0; sweep < 10; ++sweep) {
    bool changed = false;
    for (Index l = 0; l < folds; ++l) {
      Matrix& m = plan.masks[static_cast<std::size_t>(l)];
      auto move_entry = [&](Index i, Index j) {
        for (Index t = 1; t < folds; ++t) {
          const Index target = (l + t) % folds;
          Matrix& mt = plan.masks[static_cast<std::size_t>(target)];
          mt(i, j) = 1.0;
          m(i, j) = 0.0;
          if (detail::fold_ok(mt)) return true;
          mt(i, j) = 0.0;
          m(i, j) = 1.0;
        }
        return false;
      };
      for (Index i = 0; i < n; ++i) {
        if (m.row(i).sum() >= static_cast<double>(p)) {
          for (Index j = 0; j < p && !move_entry(i, j); ++j) {
          }
          changed = true;
        }
      }
      for (Index j = 0; j < p; ++j) {
        if (m.col(j).sum() >= static_cast<double>(n)) {
          for (Index i = 0; i < n && !move_entry(i, j); ++i) {
          }
          changed = true;
        }
      }
    }
    bool ok = true;
    for (const auto& m : plan.masks) ok = ok && detail::fold_ok(m);
    if (ok) {
      plan.repaired = true;
      return plan;
    }
    if (!changed) break;
  }
  throw std::runtime_error("make_cv_plan: could not keep every row and column observed in each fold");
}

struct IncompleteFit {
  Vector mu;
  Matrix U;  // n x r, column-centered, orthogonal columns
  Matrix V;  // p x r, orthonormal columns
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double observed_loglik(const DataBlock& X, const Matrix& Theta, const Matrix& mask) {
  double s = 0.0;
  for (Index j = 0; j < X.cols(); ++j) {
    const Family f = X.family[static_cast<std::size_t>(j)];
    for (Index i = 0; i < X.rows(); ++i) {
      if (mask(i, j) == 0.0) continue;
      const double t = expfam::detail::effective(f, Theta(i, j));
      s += X.X(i, j) * t - expfam::cumulant(f, t);
    }
  }
  return s;
}

}  // namespace detail

/// Rank-r fit of 1 mu' + U V' using only entries with mask = 1. Alternates
/// one-step column fits (mu_j, v_j) and row fits u_i, re-centering U into mu
/// and re-orthogonalizing after every sweep.
inline IncompleteFit fit_incomplete(const DataBlock& X, Index r, const Matrix& mask,
                                    const FitConfig& cfg) {
  const Index n = X.rows(), p = X.cols();
  if (mask.rows() != n || mask.cols() != p) {
    throw std::invalid_argument("fit_incomplete: mask shape differs from data");
  }
  if (r < 0 || r > std::min(n, p)) throw std::invalid_argument("fit_incomplete: bad rank");
  const int threads = resolve_threads(cfg.threads);
  IncompleteFit out;
  out.mu = Vector::Zero(p);

  // Start: observed marginal MLE, SVD of the centered surrogate with
  // missing cells at their column mean.
  Matrix Z = Matrix::Zero(n, p);
  for (Index j = 0; j < p; ++j) {
    const Family f = X.family[static_cast<std::size_t>(j)];
    double sum = 0.0, cnt = 0.0, zsum = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (mask(i, j) == 0.0) continue;
      sum += X.X(i, j);
      zsum += detail::surrogate(f, X.X(i, j));
      cnt += 1.0;
    }
    if (cnt == 0.0) throw std::invalid_argument("fit_incomplete: column without observations");
    double m = sum / cnt;
    const double eps = 1.0 / (2.0 * cnt);
    if (f == Family::Bernoulli) m = std::clamp(m, eps, 1.0 - eps);
    if (f == Family::Poisson) m = std::max(m, eps);
    out.mu(j) = expfam::link(f, m);
    const double zbar = zsum / cnt;
    for (Index i = 0; i < n; ++i) {
      Z(i, j) = mask(i, j) == 0.0 ? 0.0 : detail::surrogate(f, X.X(i, j)) - zbar;
    }
  }
  {
    const auto s = numkit::thin_svd(Z, r);
    out.U = s.U * s.d.asDiagonal();
    out.V = s.V;
  }

  const double lambda_b = cfg.bernoulli_ridge();
  std::vector<Family> col_fam(static_cast<std::size_t>(n));
  auto theta = [&] {
    Matrix T = out.U * out.V.transpose();
    T.rowwise() += out.mu.transpose();
    return T;
  };
  double ll = detail::observed_loglik(X, theta(), mask);
  const bool bern_any = X.has(Family::Bernoulli);
  const int max_iter = cfg.effective_max_iter();
  for (int it = 1; it <= max_iter; ++it) {
    // Columns: (mu_j, v_j) on design [1, U].
    const Matrix D = detail::with_ones(out.U);
    Matrix C(p, 1 + r);
    C << out.mu, out.V;
    const Matrix Cw = C;
    parallel_for(p, threads, [&](Index j) {
      const Family f = X.family[static_cast<std::size_t>(j)];
      const std::vector<Family> fam(static_cast<std::size_t>(n), f);
      const Vector m = mask.col(j);
      GlmOptions opt;
      opt.mask = &m;
      const auto res = glm_row_fit(X.X.col(j), fam, D, Vector::Zero(n), Cw.row(j).transpose(),
                                   f == Family::Bernoulli ? lambda_b : 0.0, GlmMode::OneStep, opt);
      C.row(j) = res.beta.transpose();
    });
    out.mu = C.col(0);
    out.V = C.rightCols(r);
    // Rows: u_i on design V with offset mu.
    if (r > 0) {
      const Matrix Uw = out.U;
      parallel_for(n, threads, [&](Index i) {
        const Vector m = mask.row(i).transpose();
        GlmOptions opt;
        opt.mask = &m;
        const auto res =
            glm_row_fit(X.X.row(i).transpose(), X.family, out.V, out.mu, Uw.row(i).transpose(),
                        bern_any ? lambda_b : 0.0, GlmMode::OneStep, opt);
        out.U.row(i) = res.beta.transpose();
      });
      // Fold the score means into mu and re-orthogonalize.
      const Vector ubar = out.U.colwise().mean().transpose();
      out.mu += out.V * ubar;
      const Matrix Uc = out.U.rowwise() - ubar.transpose();
      const auto s = numkit::lowrank_svd(Uc, out.V, r);
      out.U = s.U * s.d.asDiagonal();
      out.V = s.V;
    }
    if (!out.mu.allFinite() || !out.U.allFinite() || !out.V.allFinite()) {
      throw std::runtime_error("fit_incomplete: estimates diverged at sweep " + std::to_string(it));
    }
    const double prev = ll;
    ll = detail::observed_loglik(X, theta(), mask);
    if (!std::isfinite(ll)) {
      throw std::runtime_error("fit_incomplete: log-likelihood not finite at sweep " +
                               std::to_string(it));
    }
    out.iterations = it;
    if (std::abs(ll - prev) / (1.0 + std::abs(ll)) < cfg.tol) {
      out.converged = true;
      break;
    }
  }
  out.loglik = ll;
  return out;
}

enum class CvAggregate { Median, Mean };

struct CvOptions {
  CvAggregate aggregate = CvAggregate::Median;
  FitConfig fit;  // fit_incomplete settings (mode is ignored)
  double flat_tol = 1e-3;
  int threads = 0;

  CvOptions() {
    fit.mode = FitMode::OneStep;
    fit.max_iter = 300;
    fit.tol = 1e-6;
  }
};

struct CvRankResult {
  Index r_star = 0;
  std::vector<Index> candidates;
  Matrix scores;  // candidates x folds; NaN marks an invalid cell
  Vector overall;  // per candidate; NaN when disqualified
  std::vector<std::string> warnings;
};

/// Held-out score: mean squared Pearson residual over the entries of fold l.
inline CvRankResult cv_rank(const DataBlock& X, const std::vector<Index>& candidates, Index folds,
                            std::uint64_t seed, const CvOptions& opt = {}) {
  if (candidates.empty()) throw std::invalid_argument("cv_rank: no candidate ranks");
  const Index n = X.rows(), p = X.cols();
  for (Index r : candidates) {
    if (r < 0 || r > std::min(n, p) - 1) {
      throw std::invalid_argument("cv_rank: candidate rank " + std::to_string(r) +
                                  " outside [0, min(n, p) - 1]");
    }
  }
  X.validate();
  const CvPlan plan = make_cv_plan(n, p, folds, seed);
  const Index C = static_cast<Index>(candidates.size());
  CvRankResult res;
  res.candidates = candidates;
  res.scores = Matrix::Constant(C, folds, std::numeric_limits<double>::quiet_NaN());
  FitConfig cfg = opt.fit;
  cfg.threads = 1;
  // (fold, candidate) cells are independent.
  parallel_for(C * folds, resolve_threads(opt.threads), [&](Index cell) {
    const Index c = cell % C, l = cell / C;
    const Matrix& held = plan.masks[static_cast<std::size_t>(l)];
    const Matrix keep = Matrix::Ones(n, p) - held;
    try {
      const auto f = fit_incomplete(X, candidates[static_cast<std::size_t>(c)], keep, cfg);
      double s = 0.0, cnt = 0.0;
      for (Index j = 0; j < p; ++j) {
        const Family fam = X.family[static_cast<std::size_t>(j)];
        for (Index i = 0; i < n; ++i) {
          if (held(i, j) == 0.0) continue;
          const double th = f.mu(j) + f.U.row(i).dot(f.V.row(j));
          const double e = expfam::pearson_residual(fam, X.X(i, j), th).value;
          s += e * e;
          cnt += 1.0;
        }
      }
      res.scores(c, l) = s / cnt;
    } catch (const std::exception&) {
      // stays NaN
    }
  });
  res.overall = Vector::Constant(C, std::numeric_limits<double>::quiet_NaN());
  for (Index c = 0; c < C; ++c) {
    std::vector<double> v;
    for (Index l = 0; l < folds; ++l) {
      if (std::isfinite(res.scores(c, l))) v.push_back(res.scores(c, l));
    }
    const Index invalid = folds - static_cast<Index>(v.size());
    if (2 * invalid > folds) {
      res.warnings.push_back("rank " + std::to_string(candidates[static_cast<std::size_t>(c)]) +
                             " disqualified: " + std::to_string(invalid) + " failed folds");
      continue;
    }
    if (opt.aggregate == CvAggregate::Median) {
      res.overall(c) = median(v);
    } else {
      double s = 0.0;
      for (double x : v) s += x;
      res.overall(c) = s / static_cast<double>(v.size());
    }
  }
  // Argmin over candidates in increasing rank order; ties keep the smaller.
  std::vector<Index> order(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c) order[static_cast<std::size_t>(c)] = c;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return candidates[static_cast<std::size_t>(a)] < candidates[static_cast<std::size_t>(b)];
  });
  Index best = -1;
  for (Index c : order) {
    if (!std::isfinite(res.overall(c))) continue;
    if (best < 0 || res.overall(c) < res.overall(best)) best = c;
  }
  if (best < 0) throw std::runtime_error("cv_rank: every candidate rank failed");
  // Flat tail: if the scores from some smaller rank onward all lie within
  // flat_tol of each other, take the start of that flat region.
  std::size_t pos = 0;
  while (order[pos] != best) ++pos;
  for (std::size_t k = 0; k < pos; ++k) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t t = k; t < order.size(); ++t) {
      const double v = res.overall(order[t]);
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo <= opt.flat_tol * std::abs(lo)) {
      res.warnings.push_back("CV scores flat from rank " +
                             std::to_string(candidates[static_cast<std::size_t>(order[k])]) +
                             "; taking the smallest rank of the flat region");
      best = order[k];
      break;
    }
  }
  res.r_star = candidates[static_cast<std::size_t>(best)];
  return res;
}

struct CombinedRanks {
  Ranks ranks;
  bool clamped = false;
};

/// Inverts (r0, r1, r2) -> (r0 + r1, r0 + r2, r0 + r1 + r2).
inline CombinedRanks combine_ranks(Index r1_star, Index r2_star, Index r0_star) {
  CombinedRanks out;
  const Index lo = std::max(r1_star, r2_star), hi = r1_star + r2_star;
  Index r0s = r0_star;
  if (r0s < lo || r0s > hi) {
    out.clamped = true;
    r0s = std::clamp(r0s, lo, hi);
  }
  out.ranks = {r1_star + r2_star - r0s, r0s - r2_star, r0s - r1_star};
  return out;
}

struct RankEstimate {
  Index r1_star = 0, r2_star = 0, r0_star = 0;
  CvRankResult cv1, cv2, cv0;
  Ranks ranks;
  std::vector<std::string> warnings;
};

inline RankEstimate estimate_ranks(const DataBlock& d1, const DataBlock& d2, Index folds,
                                   Index max_rank, std::uint64_t seed, const CvOptions& opt = {}) {
  if (max_rank < 1) throw std::invalid_argument("estimate_ranks: max_rank must be >= 1");
  if (d1.rows() != d2.rows()) throw std::invalid_argument("estimate_ranks: blocks not row-aligned");
  auto range = [](Index lo, Index hi) {
    std::vector<Index> v;
    for (Index r = lo; r <= hi; ++r) v.push_back(r);
    return v;
  };
  const Index n = d1.rows();
  RankEstimate est;
  est.cv1 = cv_rank(d1, range(1, std::min(max_rank, std::min(n, d1.cols()) - 1)), folds,
                    mix64(seed + 1), opt);
  est.cv2 = cv_rank(d2, range(1, std::min(max_rank, std::min(n, d2.cols()) - 1)), folds,
                    mix64(seed + 2), opt);
  est.r1_star = est.cv1.r_star;
  est.r2_star = est.cv2.r_star;
  const DataBlock both = concatenate(d1, d2);
  const Index cap = std::min(n, both.cols()) - 1;
  const Index lo = std::min(std::max(est.r1_star, est.r2_star), cap);
  const Index hi = std::min(est.r1_star + est.r2_star, cap);
  est.cv0 = cv_rank(both, range(lo, hi), folds, mix64(seed + 3), opt);
  est.r0_star = est.cv0.r_star;
  const auto comb = combine_ranks(est.r1_star, est.r2_star, est.r0_star);
  est.ranks = comb.ranks;
  for (const auto* cv : {&est.cv1, &est.cv2, &est.cv0}) {
    est.warnings.insert(est.warnings.end(), cv->warnings.begin(), cv->warnings.end());
  }
  if (comb.clamped) est.warnings.push_back("combined rank outside its admissible range; clamped");
  return est;
}

}  // namespace gasso
