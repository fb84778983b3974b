#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gasso/model.hpp"
#include "test_util.hpp"

namespace gasso {
namespace {

using testing::gaussian_matrix;
using testing::max_theta_diff;
using testing::random_params;

TEST(NaturalParameters, ZeroStructureGivesIntercepts) {
  auto g = GasParams::zeros(4, 3, 2, {1, 1, 1});
  g.mu1 << 1, 2, 3;
  g.mu2 << -1, 5;
  const auto t = natural_parameters(g, 4);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_EQ(t.Theta1.row(i), g.mu1.transpose());
    EXPECT_EQ(t.Theta2.row(i), g.mu2.transpose());
  }
}

TEST(NaturalParameters, JointOnlyIsRankOne) {
  std::mt19937_64 rng(1);
  auto g = GasParams::zeros(6, 4, 3, {1, 0, 0});
  g.U0 = gaussian_matrix(6, 1, rng);
  g.V1 = gaussian_matrix(4, 1, rng);
  g.V2 = gaussian_matrix(3, 1, rng);
  const auto t = natural_parameters(g);
  EXPECT_LT((t.Theta1 - g.U0 * g.V1.transpose()).norm(), 1e-15);
  EXPECT_EQ(numkit::singular_values(t.Theta1).tail(3).norm() < 1e-12, true);
}

TEST(NaturalParameters, MatchesScalarAssembly) {
  std::mt19937_64 rng(2);
  const auto g = random_params(7, 5, 4, {2, 1, 2}, rng);
  const auto t = natural_parameters(g);
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 5; ++j) {
      double s = g.mu1(j);
      for (Index k = 0; k < 2; ++k) s += g.U0(i, k) * g.V1(j, k);
      for (Index k = 0; k < 1; ++k) s += g.U1(i, k) * g.A1(j, k);
      EXPECT_NEAR(t.Theta1(i, j), s, 1e-12);
    }
    for (Index j = 0; j < 4; ++j) {
      double s = g.mu2(j);
      for (Index k = 0; k < 2; ++k) s += g.U0(i, k) * g.V2(j, k);
      for (Index k = 0; k < 2; ++k) s += g.U2(i, k) * g.A2(j, k);
      EXPECT_NEAR(t.Theta2(i, j), s, 1e-12);
    }
  }
}

TEST(NaturalParameters, DimensionMismatchThrows) {
  auto g = GasParams::zeros(4, 3, 2, {1, 1, 1});
  g.V1 = Matrix::Zero(2, 1);
  EXPECT_THROW(natural_parameters(g), std::invalid_argument);
  EXPECT_THROW(natural_parameters(GasParams::zeros(4, 3, 2, {1, 1, 1}), 5),
               std::invalid_argument);
}

TEST(JointLogLikelihood, OneByOne) {
  const auto g = GasParams::zeros(1, 1, 1, {0, 0, 0});
  DataBlock d1(Matrix::Ones(1, 1), Family::Bernoulli);
  DataBlock d2(Matrix::Zero(1, 1), Family::GaussianUnitVar);
  EXPECT_NEAR(joint_log_likelihood(g, d1, d2),
              -std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi), 1e-14);
}

TEST(JointLogLikelihood, DoublingRowsDoublesValue) {
  std::mt19937_64 rng(3);
  const auto g = random_params(5, 3, 2, {1, 1, 0}, rng, 0.5);
  const auto t = natural_parameters(g);
  auto d1 = testing::sample_block(t.Theta1, Family::Poisson, rng);
  auto d2 = testing::sample_block(t.Theta2, Family::Bernoulli, rng);
  GasParams h = g;
  auto stack = [](const Matrix& M) {
    Matrix S(2 * M.rows(), M.cols());
    S << M, M;
    return S;
  };
  h.U0 = stack(g.U0);
  h.U1 = stack(g.U1);
  h.U2 = stack(g.U2);
  DataBlock e1(stack(d1.X), Family::Poisson), e2(stack(d2.X), Family::Bernoulli);
  EXPECT_NEAR(joint_log_likelihood(h, e1, e2), 2 * joint_log_likelihood(g, d1, d2), 1e-10);
}

TEST(JointLogLikelihood, MatchesScalarLoop) {
  std::mt19937_64 rng(4);
  const auto g = random_params(5, 3, 2, {1, 1, 1}, rng, 0.6);
  const auto t = natural_parameters(g);
  auto d1 = testing::sample_block(t.Theta1, Family::GaussianUnitVar, rng);
  auto d2 = testing::sample_block(t.Theta2, Family::Poisson, rng);
  double ref = 0.0;
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 3; ++j) {
      const double x = d1.X(i, j), th = t.Theta1(i, j);
      ref += -0.5 * (x - th) * (x - th) - 0.5 * std::log(2 * std::numbers::pi);
    }
    for (Index j = 0; j < 2; ++j) {
      const double x = d2.X(i, j), th = t.Theta2(i, j);
      ref += x * th - std::exp(th) - std::lgamma(x + 1);
    }
  }
  EXPECT_NEAR(joint_log_likelihood(g, d1, d2), ref, 1e-10);
}

TEST(JointLogLikelihood, SupportViolationThrows) {
  const auto g = GasParams::zeros(1, 1, 1, {0, 0, 0});
  DataBlock d1(Matrix::Constant(1, 1, 2.0), Family::Bernoulli);
  DataBlock d2(Matrix::Zero(1, 1), Family::GaussianUnitVar);
  EXPECT_THROW(joint_log_likelihood(g, d1, d2), std::domain_error);
}

TEST(Normalize, RandomParamsBecomeIdentifiable) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto g = random_params(25, 9, 7, {2, 2, 1}, rng);
    const auto r = normalize(g);
    EXPECT_FALSE(r.rank_collapsed);
    const auto rep = identifiability_report(r.params, 1e-8);
    EXPECT_TRUE(rep.all_pass()) << rep.max_violation();
    EXPECT_LT(max_theta_diff(g, r.params), 1e-8);
  }
}

TEST(Normalize, PreservesLikelihood) {
  std::mt19937_64 rng(6);
  const auto g = random_params(20, 6, 5, {1, 2, 1}, rng, 0.4);
  const auto t = natural_parameters(g);
  auto d1 = testing::sample_block(t.Theta1, Family::Poisson, rng);
  auto d2 = testing::sample_block(t.Theta2, Family::Bernoulli, rng);
  const double before = joint_log_likelihood(g, d1, d2);
  const double after = joint_log_likelihood(normalize(g).params, d1, d2);
  EXPECT_NEAR(after, before, 1e-8 * std::max(1.0, std::abs(before)));
}

// Compares two normalized parameter sets allowing per-column sign flips.
void expect_equal_up_to_sign(const Matrix& A, const Matrix& B, double tol) {
  ASSERT_EQ(A.cols(), B.cols());
  for (Index k = 0; k < A.cols(); ++k) {
    const double d = std::min((A.col(k) - B.col(k)).norm(), (A.col(k) + B.col(k)).norm());
    EXPECT_LT(d, tol) << "column " << k;
  }
}

TEST(Normalize, IdempotentUpToSign) {
  std::mt19937_64 rng(7);
  const auto g = random_params(30, 8, 6, {2, 1, 2}, rng);
  const auto a = normalize(g).params;
  const auto b = normalize(a).params;
  expect_equal_up_to_sign(a.U0, b.U0, 1e-8);
  expect_equal_up_to_sign(a.U1, b.U1, 1e-8);
  expect_equal_up_to_sign(a.U2, b.U2, 1e-8);
  expect_equal_up_to_sign(a.V0(), b.V0(), 1e-8);
  expect_equal_up_to_sign(a.A1, b.A1, 1e-8);
  EXPECT_LT(max_theta_diff(a, b), 1e-10);
}

// Two parameterizations of the same natural parameters normalize to the
// same joint and individual structures.
TEST(Normalize, UniqueStructures) {
  std::mt19937_64 rng(8);
  const Ranks r{2, 2, 1};
  for (int t = 0; t < 20; ++t) {
    const auto g = random_params(30, 9, 7, r, rng);
    GasParams h = g;
    const Matrix R0 = gaussian_matrix(2, 2, rng) + 3 * Matrix::Identity(2, 2);
    h.U0 = g.U0 * R0;
    h.V1 = g.V1 * R0.inverse().transpose();
    h.V2 = g.V2 * R0.inverse().transpose();
    const Matrix R1 = gaussian_matrix(2, 2, rng) + 3 * Matrix::Identity(2, 2);
    h.U1 = g.U1 * R1;
    h.A1 = g.A1 * R1.inverse().transpose();
    const Vector c = gaussian_matrix(2, 1, rng);
    h.U0 = h.U0.rowwise() + c.transpose();
    h.mu1 -= h.V1 * c;
    h.mu2 -= h.V2 * c;
    ASSERT_LT(max_theta_diff(g, h), 1e-9);
    const auto a = normalize(g).params, b = normalize(h).params;
    EXPECT_LT((a.U0 * a.V0().transpose() - b.U0 * b.V0().transpose()).norm(), 1e-6);
    EXPECT_LT((a.U1 * a.A1.transpose() - b.U1 * b.A1.transpose()).norm(), 1e-6);
    EXPECT_LT((a.U2 * a.A2.transpose() - b.U2 * b.A2.transpose()).norm(), 1e-6);
    EXPECT_LT((a.mu1 - b.mu1).norm() + (a.mu2 - b.mu2).norm(), 1e-6);
  }
}

TEST(Normalize, RankCollapseIsFlagged) {
  std::mt19937_64 rng(9);
  auto g = random_params(20, 6, 5, {1, 2, 1}, rng);
  g.U1.col(1) = g.U1.col(0);  // individual block-1 structure has rank 1
  const auto r = normalize(g);
  EXPECT_TRUE(r.rank_collapsed);
  EXPECT_LT(max_theta_diff(g, r.params), 1e-8);
  EXPECT_TRUE(identifiability_report(r.params, 1e-8).all_pass());
}

TEST(Normalize, ZeroRanks) {
  std::mt19937_64 rng(10);
  const auto g = random_params(10, 4, 3, {0, 0, 0}, rng);
  const auto r = normalize(g);
  EXPECT_EQ(r.params.mu1, g.mu1);
  EXPECT_EQ(r.params.mu2, g.mu2);
}

TEST(IdentifiabilityReport, DetectsViolations) {
  std::mt19937_64 rng(11);
  auto g = normalize(random_params(16, 5, 4, {2, 1, 1}, rng)).params;
  EXPECT_TRUE(identifiability_report(g, 1e-8).all_pass());
  GasParams shifted = g;
  shifted.U0.col(0).array() += 0.1;
  const auto rep = identifiability_report(shifted, 1e-8);
  EXPECT_FALSE(rep.all_pass());
  EXPECT_NEAR(rep.checks[0].violation, 0.1 * std::sqrt(16.0), 1e-9);
  GasParams doubled = g;
  doubled.V1 *= std::sqrt(2.0);
  doubled.V2 *= std::sqrt(2.0);
  const auto rep2 = identifiability_report(doubled, 1e-8);
  bool found = false;
  for (const auto& c : rep2.checks) {
    if (c.name == "V1'V1 + V2'V2 = I") {
      found = true;
      EXPECT_FALSE(c.pass);
      EXPECT_NEAR(c.violation, 1.0, 1e-8);
    }
  }
  EXPECT_TRUE(found);
}

TEST(Ranks, Validation) {
  EXPECT_NO_THROW(validate_ranks({2, 2, 2}, 200, 120, 120));
  EXPECT_THROW(validate_ranks({4, 0, 0}, 10, 3, 5), std::invalid_argument);
  EXPECT_THROW(validate_ranks({2, 2, 2}, 6, 10, 10), std::invalid_argument);
  EXPECT_THROW(validate_ranks({-1, 0, 0}, 6, 10, 10), std::invalid_argument);
}

TEST(DataBlock, ValidateNamesCell) {
  Matrix X = Matrix::Zero(3, 2);
  X(2, 1) = 2;
  DataBlock d(X, Family::Bernoulli);
  try {
    d.validate();
    FAIL();
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("(2, 1)"), std::string::npos);
  }
}

}  // namespace
}  // namespace gasso
