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

// Synthetic ground truth for the four benchmark settings, their sparse and
// higher-dimensional variants, and the metric / replicate harness.

#pragma once

#include <chrono>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gasso/association.hpp"
#include "gasso/common.hpp"
#include "gasso/fitter.hpp"
#include "gasso/model.hpp"
#include "gasso/numkit.hpp"

namespace gasso::sim {

enum class SettingId { S1_GG = 1, S2_GB = 2, S3_GP = 3, S4_BP = 4 };

struct Range {
  double lo = -0.5;
  double hi = 0.5;
};

struct SettingSpec {
  SettingId id = SettingId::S1_GG;
  Index n = 200, p1 = 120, p2 = 120;
  Family family1 = Family::GaussianUnitVar;
  Family family2 = Family::GaussianUnitVar;
  Vector joint_singvals, ind1_singvals, ind2_singvals;
  Range score_range{-0.5, 0.5};
  Range v1_range, v2_range, a1_range, a2_range;
  Range mu1_range, mu2_range;
  std::optional<double> sparse;  // joint-loading truncation quantile
  std::uint64_t seed = 1;

  Ranks ranks() const {
    return {joint_singvals.size(), ind1_singvals.size(), ind2_singvals.size()};
  }

  void validate() const {
    auto check = [](const Vector& s, const char* what) {
      for (Index k = 0; k < s.size(); ++k) {
        if (!(s(k) > 0.0) || (k > 0 && s(k) > s(k - 1))) {
          throw std::invalid_argument(std::string("SettingSpec: ") + what +
                                      " singular values must be positive and nonincreasing");
        }
      }
    };
    check(joint_singvals, "joint");
    check(ind1_singvals, "block-1 individual");
    check(ind2_singvals, "block-2 individual");
    validate_ranks(ranks(), n, p1, p2);
    if (sparse && !(*sparse >= 0.0 && *sparse < 1.0)) {
      throw std::invalid_argument("SettingSpec: sparse fraction must lie in [0, 1)");
    }
  }
};

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

/// Benchmark presets. With p != 120 the singular values scale by p / 120
/// (p1 = p2 = p) so the signal-to-noise ratio stays comparable.
inline SettingSpec preset(SettingId id, std::uint64_t seed = 1, Index p = 120) {
  SettingSpec s;
  s.id = id;
  s.seed = seed;
  s.p1 = s.p2 = p;
  switch (id) {
    case SettingId::S1_GG:
      s.joint_singvals = vec({180, 140});
      s.ind1_singvals = vec({120, 100});
      s.ind2_singvals = vec({100, 80});
      break;
    case SettingId::S2_GB:
      s.family2 = Family::Bernoulli;
      s.joint_singvals = vec({240, 220});
      s.ind1_singvals = vec({90, 80});
      s.ind2_singvals = vec({200, 180});
      s.v2_range = {-1.0, 1.0};
      break;
    case SettingId::S3_GP:
      s.family2 = Family::Poisson;
      s.joint_singvals = vec({80, 40});
      s.ind1_singvals = vec({60, 40});
      s.ind2_singvals = vec({20, 16});
      s.v2_range = {-0.25, 0.25};
      s.mu2_range = {2.0, 3.0};
      break;
    case SettingId::S4_BP:
      s.family1 = Family::Bernoulli;
      s.family2 = Family::Poisson;
      s.joint_singvals = vec({180, 140});
      s.ind1_singvals = vec({200, 160});
      s.ind2_singvals = vec({12, 10});
      s.v1_range = {-5.0, 5.0};
      s.mu2_range = {2.0, 3.0};
      break;
  }
  const double scale = static_cast<double>(p) / 120.0;
  s.joint_singvals *= scale;
  s.ind1_singvals *= scale;
  s.ind2_singvals *= scale;
  return s;
}

inline SettingId setting_from_int(int k) {
  if (k < 1 || k > 4) throw std::invalid_argument("setting must be 1, 2, 3 or 4");
  return static_cast<SettingId>(k);
}

namespace detail {

inline Matrix uniform_matrix(Index r, Index c, Range range, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(range.lo, range.hi);
  Matrix M(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) M(i, j) = u(rng);
  return M;
}

/// Classical Gram-Schmidt (two passes per column) in column order.
inline Matrix gram_schmidt(const Matrix& M) {
  Matrix Q = M;
  for (Index k = 0; k < Q.cols(); ++k) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Index j = 0; j < k; ++j) Q.col(k) -= Q.col(j).dot(Q.col(k)) * Q.col(j);
    }
    const double nk = Q.col(k).norm();
    if (!(nk > 1e-12)) throw std::runtime_error("gram_schmidt: dependent columns");
    Q.col(k) /= nk;
  }
  return Q;
}

inline double sample(Family f, double theta, std::mt19937_64& rng) {
  const double m = expfam::mean_from_natural(f, theta);
  switch (f) {
    case Family::GaussianUnitVar: return std::normal_distribution<double>(m, 1.0)(rng);
    case Family::Bernoulli: return std::bernoulli_distribution(m)(rng) ? 1.0 : 0.0;
    case Family::Poisson:
      return static_cast<double>(std::poisson_distribution<long long>(m)(rng));
  }
  return 0.0;
}

}  // namespace detail

/// Zeroes joint-loading entries whose magnitude falls below the given
/// quantile of |V0|.
inline Matrix threshold_loadings(const Matrix& V0, double fraction) {
  if (fraction <= 0.0) return V0;
  std::vector<double> a(V0.data(), V0.data() + V0.size());
  for (auto& x : a) x = std::abs(x);
  std::sort(a.begin(), a.end());
  const double pos = fraction * static_cast<double>(a.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, a.size() - 1);
  const double cut = a[lo] + (pos - static_cast<double>(lo)) * (a[hi] - a[lo]);
  Matrix out = V0;
  for (Index j = 0; j < out.cols(); ++j) {
    for (Index i = 0; i < out.rows(); ++i) {
      if (std::abs(out(i, j)) < cut) out(i, j) = 0.0;
    }
    if (out.col(j).norm() == 0.0) {
      throw std::runtime_error("sparsify: joint loading column " + std::to_string(j + 1) +
                               " was fully zeroed");
    }
  }
  return out;
}

/// Thresholded loadings, re-orthonormalized.
inline Matrix sparsify_loadings(const Matrix& V0, double fraction) {
  if (fraction <= 0.0) return V0;
  return detail::gram_schmidt(threshold_loadings(V0, fraction));
}

inline SettingSpec sparsify(SettingSpec spec, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("sparsify: fraction must lie in [0, 1)");
  }
  spec.sparse = fraction;
  return spec;
}

/// Ground-truth parameters. Scores are drawn first so that variants that
/// differ only in p share the same unit-norm scores.
inline GasParams make_truth(const SettingSpec& spec) {
  spec.validate();
  const Ranks r = spec.ranks();
  auto rng = stream_rng(spec.seed, 0, 0x5452555448ULL);
  const Index n = spec.n, p1 = spec.p1, p2 = spec.p2;
  const Index k = r.r0 + r.r1 + r.r2;

  Matrix S(n, 1 + k);
  S.col(0).setOnes();
  S.rightCols(k) = detail::uniform_matrix(n, k, spec.score_range, rng);
  const Matrix Q = detail::gram_schmidt(S);

  GasParams g;
  g.U0 = Q.middleCols(1, r.r0) * spec.joint_singvals.asDiagonal();
  g.U1 = Q.middleCols(1 + r.r0, r.r1) * spec.ind1_singvals.asDiagonal();
  g.U2 = Q.middleCols(1 + r.r0 + r.r1, r.r2) * spec.ind2_singvals.asDiagonal();

  Matrix V0(p1 + p2, r.r0);
  V0.topRows(p1) = detail::uniform_matrix(p1, r.r0, spec.v1_range, rng);
  V0.bottomRows(p2) = detail::uniform_matrix(p2, r.r0, spec.v2_range, rng);
  V0 = r.r0 ? detail::gram_schmidt(V0) : V0;
  if (spec.sparse && r.r0) V0 = sparsify_loadings(V0, *spec.sparse);
  g.V1 = V0.topRows(p1);
  g.V2 = V0.bottomRows(p2);
  g.A1 = detail::gram_schmidt(detail::uniform_matrix(p1, r.r1, spec.a1_range, rng));
  g.A2 = detail::gram_schmidt(detail::uniform_matrix(p2, r.r2, spec.a2_range, rng));
  g.mu1 = detail::uniform_matrix(p1, 1, spec.mu1_range, rng);
  g.mu2 = detail::uniform_matrix(p2, 1, spec.mu2_range, rng);
  return g;
}

struct Dataset {
  DataBlock d1, d2;
};

/// Data for replicate t; each replicate owns its own noise stream.
inline Dataset sample_data(const SettingSpec& spec, const GasParams& truth, std::uint64_t t) {
  auto rng = stream_rng(spec.seed, t + 1, 0x4e4f495345ULL);
  const auto th = natural_parameters(truth);
  auto draw = [&](const Matrix& T, Family f) {
    Matrix X(T.rows(), T.cols());
    for (Index j = 0; j < T.cols(); ++j)
      for (Index i = 0; i < T.rows(); ++i) X(i, j) = detail::sample(f, T(i, j), rng);
    return DataBlock(std::move(X), f);
  };
  Dataset d;
  d.d1 = draw(th.Theta1, spec.family1);
  d.d2 = draw(th.Theta2, spec.family2);
  return d;
}

struct Generated {
  GasParams truth;
  DataBlock d1, d2;
};

inline Generated generate(const SettingSpec& spec) {
  Generated g;
  g.truth = make_truth(spec);
  auto d = sample_data(spec, g.truth, 0);
  g.d1 = std::move(d.d1);
  g.d2 = std::move(d.d2);
  return g;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRow {
  double norm_mu[2] = {0, 0};
  double norm_jnt[2] = {0, 0};
  double norm_ind[2] = {0, 0};
  double norm_theta[2] = {0, 0};
  double rel_theta[2] = {0, 0};
  double angle_V0 = 0, angle_A1 = 0, angle_A2 = 0;  // NaN when undefined
  double rho_hat = 0;
  double time = 0;
  double iterations = 0;
};

namespace detail {

inline double angle_or_nan(const Matrix& A, const Matrix& B) {
  if (A.cols() == 0 || B.cols() == 0) return std::numeric_limits<double>::quiet_NaN();
  try {
    return numkit::principal_angle(A, B);
  } catch (const std::invalid_argument&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

inline MetricsRow evaluate(const GasParams& est, const GasParams& truth, double time = 0.0,
                           double iterations = 0.0) {
  if (est.n() != truth.n() || est.p1() != truth.p1() || est.p2() != truth.p2()) {
    throw std::invalid_argument("evaluate: dimensions differ");
  }
  MetricsRow m;
  m.norm_mu[0] = (est.mu1 - truth.mu1).norm();
  m.norm_mu[1] = (est.mu2 - truth.mu2).norm();
  m.norm_jnt[0] = (est.U0 * est.V1.transpose() - truth.U0 * truth.V1.transpose()).norm();
  m.norm_jnt[1] = (est.U0 * est.V2.transpose() - truth.U0 * truth.V2.transpose()).norm();
  m.norm_ind[0] = (est.U1 * est.A1.transpose() - truth.U1 * truth.A1.transpose()).norm();
  m.norm_ind[1] = (est.U2 * est.A2.transpose() - truth.U2 * truth.A2.transpose()).norm();
  const auto te = natural_parameters(est);
  const auto tt = natural_parameters(truth);
  m.norm_theta[0] = (te.Theta1 - tt.Theta1).norm();
  m.norm_theta[1] = (te.Theta2 - tt.Theta2).norm();
  m.rel_theta[0] = m.norm_theta[0] / tt.Theta1.norm();
  m.rel_theta[1] = m.norm_theta[1] / tt.Theta2.norm();
  m.angle_V0 = detail::angle_or_nan(est.V0(), truth.V0());
  m.angle_A1 = detail::angle_or_nan(est.A1, truth.A1);
  m.angle_A2 = detail::angle_or_nan(est.A2, truth.A2);
  try {
    m.rho_hat = association_coefficient(te.Theta1, te.Theta2);
  } catch (const std::domain_error&) {
    m.rho_hat = std::numeric_limits<double>::quiet_NaN();
  }
  m.time = time;
  m.iterations = iterations;
  return m;
}

inline MetricsRow evaluate(const FitResult& fit, const GasParams& truth) {
  return evaluate(fit.params, truth, fit.wall_time, fit.iterations);
}

/// Metric names in table order, with accessors.
inline const std::vector<std::pair<std::string, double (*)(const MetricsRow&)>>& metric_columns() {
  static const std::vector<std::pair<std::string, double (*)(const MetricsRow&)>> cols = {
      {"norm_mu_1", [](const MetricsRow& m) { return m.norm_mu[0]; }},
      {"norm_mu_2", [](const MetricsRow& m) { return m.norm_mu[1]; }},
      {"norm_jnt_1", [](const MetricsRow& m) { return m.norm_jnt[0]; }},
      {"norm_jnt_2", [](const MetricsRow& m) { return m.norm_jnt[1]; }},
      {"norm_ind_1", [](const MetricsRow& m) { return m.norm_ind[0]; }},
      {"norm_ind_2", [](const MetricsRow& m) { return m.norm_ind[1]; }},
      {"norm_theta_1", [](const MetricsRow& m) { return m.norm_theta[0]; }},
      {"norm_theta_2", [](const MetricsRow& m) { return m.norm_theta[1]; }},
      {"rel_theta_1", [](const MetricsRow& m) { return m.rel_theta[0]; }},
      {"rel_theta_2", [](const MetricsRow& m) { return m.rel_theta[1]; }},
      {"angle_A1", [](const MetricsRow& m) { return m.angle_A1; }},
      {"angle_A2", [](const MetricsRow& m) { return m.angle_A2; }},
      {"angle_V0", [](const MetricsRow& m) { return m.angle_V0; }},
      {"rho_hat", [](const MetricsRow& m) { return m.rho_hat; }},
      {"iterations", [](const MetricsRow& m) { return m.iterations; }},
      {"time", [](const MetricsRow& m) { return m.time; }},
  };
  return cols;
}

struct MetricSummary {
  std::string name;
  double median = 0;
  double mad = 0;
};

struct ModeResult {
  FitConfig config;
  std::vector<MetricsRow> rows;  // successful replicates only
  std::vector<std::string> failures;
  std::vector<MetricSummary> summary;

  const MetricSummary& get(const std::string& name) const {
    for (const auto& s : summary) {
      if (s.name == name) return s;
    }
    throw std::out_of_range("no metric '" + name + "'");
  }
};

inline std::vector<MetricSummary> summarize(const std::vector<MetricsRow>& rows) {
  std::vector<MetricSummary> out;
  for (const auto& [name, get] : metric_columns()) {
    std::vector<double> v;
    for (const auto& r : rows) {
      const double x = get(r);
      if (std::isfinite(x)) v.push_back(x);
    }
    out.push_back({name, median(v), v.empty() ? std::numeric_limits<double>::quiet_NaN() : mad(v)});
  }
  return out;
}

struct BenchmarkOptions {
  std::optional<Ranks> rank_override;
  int threads = 0;  // replicate-level workers
  std::uint64_t first_replicate = 0;
};

/// Fixed truth, fresh noise per replicate; each mode fits the same data.
inline std::vector<ModeResult> run_benchmark(const SettingSpec& spec, Index replicates,
                                             const std::vector<FitConfig>& modes,
                                             const BenchmarkOptions& opt = {}) {
  if (replicates < 1) throw std::invalid_argument("run_benchmark: replicates must be >= 1");
  const GasParams truth = make_truth(spec);
  const Ranks ranks = opt.rank_override.value_or(spec.ranks());
  const std::size_t R = static_cast<std::size_t>(replicates);
  std::vector<std::vector<std::optional<MetricsRow>>> rows(
      modes.size(), std::vector<std::optional<MetricsRow>>(R));
  std::vector<std::vector<std::string>> errors(modes.size(), std::vector<std::string>(R));
  parallel_for(replicates, resolve_threads(opt.threads), [&](Index t) {
    const auto data = sample_data(spec, truth, opt.first_replicate + static_cast<std::uint64_t>(t));
    for (std::size_t m = 0; m < modes.size(); ++m) {
      FitConfig cfg = modes[m];
      cfg.threads = 1;
      try {
        const auto res = fit(data.d1, data.d2, ranks, cfg);
        rows[m][static_cast<std::size_t>(t)] = evaluate(res, truth);
      } catch (const std::exception& e) {
        errors[m][static_cast<std::size_t>(t)] = e.what();
      }
    }
  });
  std::vector<ModeResult> out(modes.size());
  for (std::size_t m = 0; m < modes.size(); ++m) {
    out[m].config = modes[m];
    for (std::size_t t = 0; t < R; ++t) {
      if (rows[m][t]) {
        out[m].rows.push_back(*rows[m][t]);
      } else {
        out[m].failures.push_back("replicate " + std::to_string(t) + ": " + errors[m][t]);
      }
    }
    out[m].summary = summarize(out[m].rows);
  }
  return out;
}

}  // namespace gasso::sim
