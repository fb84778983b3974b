#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "gasso/association.hpp"
#include "test_util.hpp"

namespace gasso {
namespace {

using testing::gaussian_matrix;

// Nuclear norm from the eigenvalues +-sigma_i of [0 M; M' 0], independent
// of the SVD path.
double nuclear_oracle(const Matrix& M) {
  const Index a = M.rows(), b = M.cols();
  Matrix H = Matrix::Zero(a + b, a + b);
  H.topRightCorner(a, b) = M;
  H.bottomLeftCorner(b, a) = M.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

double rho_oracle(Matrix T1, Matrix T2) {
  T1.rowwise() -= T1.colwise().mean();
  T2.rowwise() -= T2.colwise().mean();
  return nuclear_oracle(T1.transpose() * T2) / (T1.norm() * T2.norm());
}

Matrix toy_scores() {
  Matrix U0(3, 2);
  U0 << 2, 1, -2, 1, 0, -2;
  return U0;
}

TEST(Association, ToyExampleWithUnevenWeights) {
  const double s = std::sqrt(50.02);
  Matrix V1(2, 2), V2(2, 2);
  V1 << 5 / s, 0.1 / s, 5 / s, -0.1 / s;
  V2 << 0.1 / s, 5 / s, -0.1 / s, 5 / s;
  const Matrix U0 = toy_scores();
  const double rho = association_coefficient(U0 * V1.transpose(), U0 * V2.transpose());
  EXPECT_NEAR(rho, 0.0404, 1e-3);
}

TEST(Association, ToyExampleWithHomogeneousWeights) {
  // Block-2 loadings have column norms proportional to block 1's.
  const double s = std::sqrt(1.5);
  Matrix V1(2, 2), V2(2, 2);
  V1 << 0.1 / s, -0.2 / s, 0.2 / s, 0.1 / s;
  V2 << 0.8 / s, -0.9 / s, 0.9 / s, 0.8 / s;
  const Matrix U0 = toy_scores();
  EXPECT_NEAR(association_coefficient(U0 * V1.transpose(), U0 * V2.transpose()), 1.0, 1e-8);
}

TEST(Association, OrthogonalColumnSpacesGiveZero) {
  Matrix T1 = Matrix::Zero(4, 2), T2 = Matrix::Zero(4, 3);
  T1.col(0) << 1, -1, 0, 0;
  T1.col(1) << 2, -2, 0, 0;
  T2.col(0) << 0, 0, 1, -1;
  T2.col(2) << 0, 0, -3, 3;
  EXPECT_NEAR(association_coefficient(T1, T2), 0.0, 1e-15);
}

TEST(Association, RankOneJointOnlyIsOne) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix u = gaussian_matrix(15, 1, rng);
    const Matrix v1 = gaussian_matrix(7, 1, rng), v2 = gaussian_matrix(4, 1, rng);
    EXPECT_NEAR(association_coefficient(u * v1.transpose(), u * v2.transpose()), 1.0, 1e-12);
  }
}

TEST(Association, MatchesOracleAndStaysInUnitInterval) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const Index n = 3 + rep % 20;
    const Matrix T1 = gaussian_matrix(n, 1 + rep % 5, rng);
    const Matrix T2 = gaussian_matrix(n, 1 + rep % 7, rng);
    const double rho = association_coefficient(T1, T2);
    EXPECT_GE(rho, 0.0);
    EXPECT_LE(rho, 1.0);
    EXPECT_NEAR(rho, rho_oracle(T1, T2), 1e-10);
  }
}

TEST(Association, InvariantToColumnShiftsAndScaling) {
  std::mt19937_64 rng(5);
  const Matrix T1 = gaussian_matrix(12, 3, rng), T2 = gaussian_matrix(12, 4, rng);
  Matrix S1 = 3.7 * T1, S2 = T2;
  S1.rowwise() += Eigen::RowVector3d(1, -2, 5);
  S2.rowwise() += Eigen::RowVector4d(9, 9, 9, 9);
  EXPECT_NEAR(association_coefficient(T1, T2), association_coefficient(S1, S2), 1e-12);
}

TEST(Association, ZeroInputAndShapeErrors) {
  const Matrix Z = Matrix::Constant(5, 2, 3.0);  // zero after centering
  std::mt19937_64 rng(1);
  const Matrix T = gaussian_matrix(5, 2, rng);
  EXPECT_THROW(association_coefficient(Z, T), std::domain_error);
  EXPECT_THROW(association_coefficient(T, Z), std::domain_error);
  EXPECT_THROW(association_coefficient(T, gaussian_matrix(4, 2, rng)), std::invalid_argument);
}

TEST(RandomPermutation, IsAPermutationAndSeeded) {
  std::mt19937_64 a(9), b(9);
  const auto p = random_permutation(50, a);
  EXPECT_EQ(p, random_permutation(50, b));
  EXPECT_EQ(std::set<Index>(p.begin(), p.end()).size(), 50u);
  EXPECT_EQ(*std::max_element(p.begin(), p.end()), 49);
}

TEST(PermutationTest, NullSamplesMatchDirectPermutation) {
  std::mt19937_64 rng(2);
  const Matrix T1 = gaussian_matrix(30, 3, rng), T2 = gaussian_matrix(30, 5, rng);
  const auto res = permutation_test(T1, T2, 40, 123);
  for (Index b = 0; b < 40; ++b) {
    auto r = stream_rng(123, static_cast<std::uint64_t>(b), 0x5045524dULL);
    const auto perm = random_permutation(30, r);
    Matrix P2(30, 5);
    for (Index i = 0; i < 30; ++i) P2.row(i) = T2.row(perm[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(res.null_samples[static_cast<std::size_t>(b)], rho_oracle(T1, P2), 1e-10);
  }
  EXPECT_NEAR(res.rho0, rho_oracle(T1, T2), 1e-10);
}

TEST(PermutationTest, PValueConventions) {
  std::mt19937_64 rng(4);
  const Matrix T1 = gaussian_matrix(25, 2, rng), T2 = gaussian_matrix(25, 2, rng);
  const auto res = permutation_test(T1, T2, 99, 1);
  Index exceed = 0;
  for (double v : res.null_samples) exceed += v >= res.rho0 * (1 - 1e-12);
  EXPECT_DOUBLE_EQ(res.p_value, (1.0 + exceed) / 100.0);
  EXPECT_DOUBLE_EQ(res.p_value_plain, exceed / 99.0);
}

TEST(PermutationTest, PermutationInvariantInputGivesPOne) {
  // With two samples every permutation reproduces rho0 exactly.
  Matrix T1(2, 2), T2(2, 3);
  T1 << 1, 2, -1, -2;
  T2 << 3, 1, 4, -3, -1, -4;
  const auto res = permutation_test(T1, T2, 50, 8);
  for (double v : res.null_samples) EXPECT_NEAR(v, res.rho0, 1e-12);
  EXPECT_DOUBLE_EQ(res.p_value, 1.0);
  EXPECT_DOUBLE_EQ(res.p_value_plain, 1.0);
}

TEST(PermutationTest, IdenticalBlocksGiveSmallestPValue) {
  std::mt19937_64 rng(6);
  const Matrix T = gaussian_matrix(60, 4, rng);
  const auto res = permutation_test(T, T, 1000, 7);
  EXPECT_NEAR(res.rho0, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(res.p_value, 1.0 / 1001.0);
}

TEST(PermutationTest, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 rng(8);
  const Matrix T1 = gaussian_matrix(40, 3, rng), T2 = gaussian_matrix(40, 3, rng);
  const auto a = permutation_test(T1, T2, 64, 5, 1);
  const auto b = permutation_test(T1, T2, 64, 5, 4);
  EXPECT_EQ(a.null_samples, b.null_samples);
  EXPECT_EQ(a.p_value, b.p_value);
}

TEST(PermutationTest, NullPValuesRoughlyUniform) {
  // Small version of the uniformity check: KS statistic at level 0.01.
  const int reps = 60;
  std::vector<double> p;
  std::mt19937_64 rng(10);
  for (int t = 0; t < reps; ++t) {
    const Matrix T1 = gaussian_matrix(50, 5, rng), T2 = gaussian_matrix(50, 5, rng);
    p.push_back(permutation_test(T1, T2, 199, 1000 + t).p_value);
  }
  std::sort(p.begin(), p.end());
  double D = 0.0;
  for (int i = 0; i < reps; ++i) {
    D = std::max({D, std::abs((i + 1.0) / reps - p[i]), std::abs(p[i] - double(i) / reps)});
  }
  EXPECT_LT(D, 1.628 / std::sqrt(double(reps)));
}

TEST(PermutationTest, RejectsBadArguments) {
  std::mt19937_64 rng(1);
  const Matrix T = gaussian_matrix(5, 2, rng);
  EXPECT_THROW(permutation_test(T, T, 0, 1), std::invalid_argument);
  EXPECT_THROW(permutation_test(T, gaussian_matrix(6, 2, rng), 10, 1), std::invalid_argument);
}

}  // namespace
}  // namespace gasso
