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

// Prediction with a fitted model: tag annotation of a new block-1 sample
// through its joint score, and retrieval of training samples closest to a
// binary block-2 query in score space.

#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gasso/common.hpp"
#include "gasso/expfam.hpp"
#include "gasso/fitter.hpp"
#include "gasso/model.hpp"

namespace gasso {

struct AnnotateResult {
  Vector probs;  // P(tag j present), length p2
  Vector u0;     // estimated joint score of the new sample
  Vector u1;     // estimated block-1 individual score
  bool stalled = false;
};

/// Fits (u0, u1) of the new sample by GLM on design [V1, A1] with offset
/// mu1, then reads block-2 tag probabilities off mu2 + V2 u0. Block 2 is
/// assumed binary.
inline AnnotateResult annotate(const GasParams& g, const Vector& x1_new,
                               const std::vector<Family>& family1, double ridge_bernoulli = 1e-3) {
  const Index p1 = g.p1();
  if (x1_new.size() != p1) {
    throw std::invalid_argument("annotate: sample has " + std::to_string(x1_new.size()) +
                                " features, model expects " + std::to_string(p1));
  }
  if (static_cast<Index>(family1.size()) != p1) {
    throw std::invalid_argument("annotate: family list length differs from p1");
  }
  for (Index j = 0; j < p1; ++j) {
    if (!expfam::in_support(family1[static_cast<std::size_t>(j)], x1_new(j))) {
      throw std::domain_error("annotate: feature " + std::to_string(j) +
                              " outside the support of its family");
    }
  }
  const Index r0 = g.U0.cols(), r1 = g.U1.cols();
  AnnotateResult out;
  out.u0 = Vector::Zero(r0);
  out.u1 = Vector::Zero(r1);
  if (r0 + r1 > 0) {
    Matrix D(p1, r0 + r1);
    D << g.V1, g.A1;
    const bool bern = std::find(family1.begin(), family1.end(), Family::Bernoulli) != family1.end();
    const auto fit = glm_row_fit(x1_new, family1, D, g.mu1, Vector::Zero(r0 + r1),
                                 bern ? ridge_bernoulli : 0.0, GlmMode::FullIRLS, GlmOptions{});
    out.stalled = fit.stalled;
    out.u0 = fit.beta.head(r0);
    out.u1 = fit.beta.tail(r1);
  }
  const Vector theta2 = g.mu2 + g.V2 * out.u0;
  out.probs = theta2.unaryExpr([](double t) { return expfam::detail::logistic(t); });
  return out;
}

/// Indices of the k largest probabilities; ties keep the smaller index.
inline std::vector<Index> top_k(const Vector& probs, Index k) {
  std::vector<Index> idx(static_cast<std::size_t>(probs.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return probs(a) > probs(b); });
  idx.resize(static_cast<std::size_t>(std::clamp<Index>(k, 0, probs.size())));
  return idx;
}

inline std::vector<std::string> top_k_tags(const Vector& probs, Index k,
                                           const std::vector<std::string>& names) {
  if (static_cast<Index>(names.size()) != probs.size()) {
    throw std::invalid_argument("top_k_tags: name count differs from probability count");
  }
  std::vector<std::string> out;
  for (Index j : top_k(probs, k)) out.push_back(names[static_cast<std::size_t>(j)]);
  return out;
}

/// Training scores (U0, U2) with the precision matrix of their sample
/// covariance.
struct ScoreIndex {
  Matrix scores;     // n x (r0 + r2)
  Matrix precision;  // (r0 + r2) x (r0 + r2)
  double ridge = 0.0;
  std::vector<std::string> labels;
};

/// ridge < 0 selects the default 1e-6 * trace(S) / dim.
inline ScoreIndex build_score_index(const GasParams& g, double ridge = -1.0,
                                    std::vector<std::string> labels = {}) {
  const Index n = g.n(), r0 = g.U0.cols(), r2 = g.U2.cols(), k = r0 + r2;
  if (!labels.empty() && static_cast<Index>(labels.size()) != n) {
    throw std::invalid_argument("build_score_index: label count differs from n");
  }
  if (n < 2) throw std::invalid_argument("build_score_index: need at least 2 training samples");
  ScoreIndex idx;
  idx.labels = std::move(labels);
  idx.scores.resize(n, k);
  idx.scores << g.U0, g.U2;
  if (k == 0) {
    idx.precision = Matrix::Zero(0, 0);
    return idx;
  }
  const Matrix C = idx.scores.rowwise() - idx.scores.colwise().mean();
  Matrix S = C.transpose() * C / static_cast<double>(n - 1);
  idx.ridge = ridge < 0.0 ? 1e-6 * S.trace() / static_cast<double>(k) : ridge;
  S.diagonal().array() += idx.ridge;
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  const Vector& ev = es.eigenvalues();
  if (!(ev(0) > 1e-12 * std::max(ev(k - 1), 1e-300))) {
    throw std::domain_error(
        "build_score_index: score covariance is singular; use a positive ridge");
  }
  idx.precision = es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                  es.eigenvectors().transpose();
  return idx;
}

struct RetrieveResult {
  Vector score;                // (u0*, u2*) of the query
  std::vector<Index> order;    // training rows, closest first
  std::vector<double> distance;  // Mahalanobis distance, aligned with order
  bool stalled = false;
};

struct Ranking {
  std::vector<Index> order;
  std::vector<double> distance;
};

/// Indexed rows sorted by Mahalanobis distance to `score`; ties keep row order.
inline Ranking rank_by_distance(const ScoreIndex& idx, const Vector& score) {
  const Index n = idx.scores.rows(), k = idx.scores.cols();
  if (score.size() != k) throw std::invalid_argument("rank_by_distance: score length mismatch");
  Vector dist(n);
  for (Index i = 0; i < n; ++i) {
    const Vector d = idx.scores.row(i).transpose() - score;
    dist(i) = k == 0 ? 0.0 : std::sqrt(std::max(0.0, d.dot(idx.precision * d)));
  }
  Ranking out;
  out.order.resize(static_cast<std::size_t>(n));
  std::iota(out.order.begin(), out.order.end(), Index{0});
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](Index a, Index b) { return dist(a) < dist(b); });
  for (Index i : out.order) out.distance.push_back(dist(i));
  return out;
}

/// Binary query over block-2 tags: Bernoulli GLM on design [V2, A2] with
/// offset mu2, then training rows ranked by Mahalanobis distance.
inline RetrieveResult retrieve(const GasParams& g, const ScoreIndex& idx, const Vector& query,
                               double ridge_bernoulli = 1e-3) {
  const Index p2 = g.p2(), r0 = g.U0.cols(), r2 = g.U2.cols(), k = r0 + r2;
  if (query.size() != p2) {
    throw std::invalid_argument("retrieve: query has " + std::to_string(query.size()) +
                                " tags, model expects " + std::to_string(p2));
  }
  for (Index j = 0; j < p2; ++j) {
    if (query(j) != 0.0 && query(j) != 1.0) {
      throw std::domain_error("retrieve: query tag " + std::to_string(j) + " is not 0/1");
    }
  }
  if (idx.scores.cols() != k) throw std::invalid_argument("retrieve: index built for another model");
  RetrieveResult out;
  out.score = Vector::Zero(k);
  if (k > 0) {
    Matrix D(p2, k);
    D << g.V2, g.A2;
    const std::vector<Family> fam(static_cast<std::size_t>(p2), Family::Bernoulli);
    const auto fit = glm_row_fit(query, fam, D, g.mu2, Vector::Zero(k), ridge_bernoulli,
                                 GlmMode::FullIRLS, GlmOptions{});
    out.score = fit.beta;
    out.stalled = fit.stalled;
  }
  auto ranked = rank_by_distance(idx, out.score);
  out.order = std::move(ranked.order);
  out.distance = std::move(ranked.distance);
  return out;
}

}  // namespace gasso
